//! Sliding-window sparse attention refined by PDE steps, and the error
//! analysis against dense attention.

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::attention::{attention_init_masked, AttentionMask};
use crate::error::{Error, Result};
use crate::grid::{dft_row, lambda_min, mode_eigenvalues, AxisMode, BoundaryCondition};
use crate::pde::{run_steps, AttentionField, PdeConfig, PdeKind};

/// Band of half-width `window` plus global tokens that attend and are
/// attended everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparsePattern {
    pub window: usize,
    pub global_indices: BTreeSet<usize>,
}

impl SparsePattern {
    pub fn new(window: usize, global_indices: impl IntoIterator<Item = usize>) -> Self {
        SparsePattern {
            window,
            global_indices: global_indices.into_iter().collect(),
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        i.abs_diff(j) <= self.window
            || self.global_indices.contains(&i)
            || self.global_indices.contains(&j)
    }

    pub fn validate(&self, t: usize) -> Result<()> {
        if self.window < 1 || self.window >= t {
            return Err(Error::InvalidConfig(format!(
                "window {} must satisfy 1 <= w < T = {t}",
                self.window
            )));
        }
        if let Some(&g) = self.global_indices.iter().find(|&&g| g >= t) {
            return Err(Error::InvalidConfig(format!("global index {g} outside [0, {t})")));
        }
        Ok(())
    }

    /// Dense 0/1 mask of the pattern.
    pub fn mask(&self, t: usize) -> Array2<bool> {
        Array2::from_shape_fn((t, t), |(i, j)| self.contains(i, j))
    }
}

/// Phase 1: softmax restricted to the pattern; out-of-pattern entries are
/// exactly zero.
pub fn sparse_init(
    q: &Array2<f64>,
    k: &Array2<f64>,
    pattern: &SparsePattern,
    bc: BoundaryCondition,
) -> Result<AttentionField> {
    pattern.validate(q.nrows())?;
    let mask = AttentionMask::Sparse(pattern.clone());
    let field = attention_init_masked(q.view(), k.view(), &mask, bc)?;
    if let Some(i) = field.row_sums().iter().position(|s| !(*s > 0.0)) {
        return Err(Error::DegenerateField { row: i, mass: 0.0 });
    }
    Ok(field)
}

/// Sparse initialisation, `cfg.n_steps` refinement steps, then `A v`.
pub fn hybrid_attention(
    q: &Array2<f64>,
    k: &Array2<f64>,
    v: &Array2<f64>,
    pattern: &SparsePattern,
    cfg: &PdeConfig,
) -> Result<Array2<f64>> {
    if v.nrows() != q.nrows() {
        return Err(Error::shape(format!("{} value rows", q.nrows()), v.nrows().to_string()));
    }
    let a0 = sparse_init(q, k, pattern, cfg.bc)?;
    let steps = run_steps(&a0.values, false, cfg, &cfg.coefficients())?;
    Ok(steps.fields.last().expect("steps hold A(0)").dot(v))
}

#[derive(Debug, Clone, Serialize)]
pub struct HybridErrorReport {
    /// `||A_sparse(0) - A_true||_F`.
    pub epsilon_0: f64,
    /// `||A(n) - A_true||_F` for `n = 0..=n_steps`.
    pub errors: Vec<f64>,
    /// Per step and mode `k`, the root-sum-square over rows of `|c_k|`.
    pub mode_magnitudes: Vec<Vec<f64>>,
    /// Whether `A_true` is a fixed point of the refinement operator.
    pub stationary: bool,
    /// Worst relative deviation from `c_k(n+1) = (1 - alpha dt lambda_k) c_k(n)`;
    /// only computed for stationary periodic per-row diffusion.
    pub recursion_max_rel_error: Option<f64>,
    /// Least-squares decay rate of the mode-1 error magnitude per step.
    pub fitted_decay_rate: Option<f64>,
    /// `-ln(1 - alpha dt lambda_min)`.
    pub predicted_decay_rate: f64,
}

impl HybridErrorReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,frobenius_error,mode_k,coefficient_magnitude")?;
        for (n, (err, modes)) in self.errors.iter().zip(&self.mode_magnitudes).enumerate() {
            for (k, m) in modes.iter().enumerate() {
                writeln!(w, "{n},{err},{k},{m}")?;
            }
        }
        Ok(())
    }
}

/// `|difference| / max(|expected|, floor)`; the floor matters where an
/// expected Fourier coefficient is driven to (near) zero by the decay.
pub(crate) fn floored_rel_error(difference: f64, expected: f64, floor: f64) -> f64 {
    difference.abs() / expected.abs().max(floor).max(f64::MIN_POSITIVE)
}

/// Slope of the least-squares line through `(x, y)`, plus Pearson r.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r = if syy == 0.0 { 1.0 } else { sxy / (sxx * syy).sqrt() };
    Some((slope, my - slope * mx, r))
}

/// Refine the sparse field and track its error against the dense softmax
/// field `A_true` step by step.
pub fn hybrid_error_experiment(
    q: &Array2<f64>,
    k: &Array2<f64>,
    pattern: &SparsePattern,
    cfg: &PdeConfig,
) -> Result<HybridErrorReport> {
    let t = q.nrows();
    let truth = attention_init_masked(q.view(), k.view(), &AttentionMask::Dense, cfg.bc)?;
    let a0 = sparse_init(q, k, pattern, cfg.bc)?;
    let steps = run_steps(&a0.values, false, cfg, &cfg.coefficients())?;

    let truth_lap = cfg.domain(false).laplacian(&truth.values);
    let stationary = truth_lap.iter().all(|&x| x == 0.0)
        && (cfg.kind == PdeKind::Diffusion
            || (cfg.kind == PdeKind::AdvectionDiffusion
                && cfg.domain(false).gradient(&truth.values, cfg.scheme).iter().all(|&x| x == 0.0)));

    let mut errors = Vec::with_capacity(steps.fields.len());
    let mut spectra: Vec<Vec<Vec<num_complex::Complex64>>> = Vec::with_capacity(steps.fields.len());
    for f in &steps.fields {
        let e = f - &truth.values;
        errors.push(e.iter().map(|x| x * x).sum::<f64>().sqrt());
        let rows = e
            .axis_iter(Axis(0))
            .map(|r| dft_row(&r.to_vec()).map(|s| s.coefficients))
            .collect::<Result<Vec<_>>>()?;
        spectra.push(rows);
    }
    let mode_magnitudes: Vec<Vec<f64>> = spectra
        .iter()
        .map(|rows| {
            (0..t)
                .map(|kk| rows.iter().map(|r| r[kk].norm_sqr()).sum::<f64>().sqrt())
                .collect()
        })
        .collect();

    let ad = cfg.alpha * cfg.dt;
    let lam = mode_eigenvalues(t);
    let recursion_applies = stationary
        && cfg.kind == PdeKind::Diffusion
        && cfg.bc == BoundaryCondition::Periodic
        && cfg.axis == AxisMode::PerRow1d
        && !cfg.renormalize_rows
        && !cfg.clamp_nonnegative;
    let recursion_max_rel_error = recursion_applies.then(|| {
        let mut worst = 0.0f64;
        for i in 0..t {
            let scale = spectra[0][i].iter().fold(0.0f64, |m, c| m.max(c.norm()));
            if scale == 0.0 {
                continue;
            }
            for n in 0..cfg.n_steps {
                for kk in 0..t {
                    let before = spectra[n][i][kk];
                    if before.norm() <= 1e-12 * scale {
                        continue;
                    }
                    let expected = before * (1.0 - ad * lam[kk]);
                    let got = spectra[n + 1][i][kk];
                    worst = worst.max(floored_rel_error(
                        (got - expected).norm(),
                        expected.norm(),
                        1e-6 * scale,
                    ));
                }
            }
        }
        worst
    });

    let mode1: Vec<f64> = mode_magnitudes.iter().map(|m| m[1 % t]).collect();
    let fitted_decay_rate = if mode1.iter().all(|&m| m > 0.0) && mode1.len() >= 2 {
        let x: Vec<f64> = (0..mode1.len()).map(|n| n as f64).collect();
        let y: Vec<f64> = mode1.iter().map(|m| m.ln()).collect();
        linear_fit(&x, &y).map(|(slope, _, _)| -slope)
    } else {
        None
    };

    Ok(HybridErrorReport {
        epsilon_0: errors[0],
        errors,
        mode_magnitudes,
        stationary,
        recursion_max_rel_error,
        fitted_decay_rate,
        predicted_decay_rate: -(1.0 - ad * lambda_min(t)).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{attention_init, standard_attention};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn full_window_equals_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (q, k) = (rand_mat(6, 3, &mut rng), rand_mat(6, 3, &mut rng));
        let sparse = sparse_init(&q, &k, &SparsePattern::new(5, []), BoundaryCondition::Periodic).unwrap();
        let dense = attention_init(&q, &k).unwrap();
        for (a, b) in sparse.values.iter().zip(dense.values.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn banded_uniform_rows() {
        let z = Array2::zeros((6, 2));
        let a = sparse_init(&z, &z, &SparsePattern::new(1, []), BoundaryCondition::Periodic).unwrap();
        for i in 0..6usize {
            let support = if i == 0 || i == 5 { 2.0 } else { 3.0 };
            for j in 0..6 {
                let expected = if i.abs_diff(j) <= 1 { 1.0 / support } else { 0.0 };
                assert!((a.values[[i, j]] - expected).abs() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn global_token_is_dense() {
        let p = SparsePattern::new(1, [3]);
        let m = p.mask(8);
        for j in 0..8 {
            assert!(m[[3, j]] && m[[j, 3]]);
        }
        assert!(!m[[0, 5]]);
        assert!(p.validate(8).is_ok());
        assert!(SparsePattern::new(0, []).validate(8).is_err());
        assert!(SparsePattern::new(8, []).validate(8).is_err());
        assert!(SparsePattern::new(1, [8]).validate(8).is_err());
    }

    #[test]
    fn zero_steps_is_sparse_attention() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (q, k, v) = (rand_mat(7, 2, &mut rng), rand_mat(7, 2, &mut rng), rand_mat(7, 2, &mut rng));
        let p = SparsePattern::new(2, [0]);
        let out = hybrid_attention(&q, &k, &v, &p, &PdeConfig::diffusion(0.1, 1.0, 0)).unwrap();
        let a = sparse_init(&q, &k, &p, BoundaryCondition::Periodic).unwrap();
        assert_eq!(out, a.values.dot(&v));
        // full window with no steps: plain attention
        let full = hybrid_attention(&q, &k, &v, &SparsePattern::new(6, []), &PdeConfig::diffusion(0.1, 1.0, 0)).unwrap();
        let reference = standard_attention(&q, &k, &v);
        for (a, b) in full.iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn diffusion_leaks_mass_out_of_band() {
        let z = Array2::zeros((8, 2));
        let p = SparsePattern::new(1, []);
        let a0 = sparse_init(&z, &z, &p, BoundaryCondition::Periodic).unwrap();
        let steps = run_steps(&a0.values, false, &PdeConfig::diffusion(0.1, 1.0, 1), &PdeConfig::diffusion(0.1, 1.0, 1).coefficients()).unwrap();
        let a1 = &steps.fields[1];
        // row 3 is supported on 2..=4 initially; one step reaches 1 and 5
        assert_eq!(a0.values[[3, 5]], 0.0);
        assert!(a1[[3, 5]] > 0.0 && a1[[3, 1]] > 0.0);
        assert_eq!(a1[[3, 6]], 0.0);
    }

    #[test]
    fn dense_pattern_has_no_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let (q, k) = (rand_mat(6, 2, &mut rng), rand_mat(6, 2, &mut rng));
        let r = hybrid_error_experiment(&q, &k, &SparsePattern::new(5, []), &PdeConfig::diffusion(0.1, 1.0, 0)).unwrap();
        assert_eq!(r.epsilon_0, 0.0);
        assert_eq!(r.errors.len(), 1);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (m, b, r) = linear_fit(&x, &y).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }
}
