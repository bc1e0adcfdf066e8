use std::io::Write;

use ndarray::Array2;
use serde::Serialize;

use super::kernels::{postprocess, raw_update};
use super::{AttentionField, Coefficients, PdeConfig, PdeKind, DIVERGENCE_LIMIT};
use crate::error::{Error, Result};
use crate::metrics::DynamicsMetrics;

/// Metrics of one snapshot. `step` 0 is the initial field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub step: usize,
    pub smoothness: f64,
    pub consistency: f64,
    pub range: f64,
    /// Largest per-row deviation of the row sum from its initial value.
    pub row_sum_drift: f64,
    pub max_entry: f64,
    /// Total mass before renormalization, when rows are renormalized.
    pub pre_norm_mass: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<AttentionField>,
    pub step_metrics: Vec<StepMetrics>,
}

impl Trajectory {
    pub fn last(&self) -> &AttentionField {
        self.snapshots.last().expect("trajectory holds the initial field")
    }

    pub fn write_metrics_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,S,C,R,row_sum_drift,max_entry")?;
        for m in &self.step_metrics {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                m.step, m.smoothness, m.consistency, m.range, m.row_sum_drift, m.max_entry
            )?;
        }
        Ok(())
    }

    /// One flattened (row-major) snapshot per line.
    pub fn write_snapshots_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let Some(first) = self.snapshots.first() else {
            return Ok(());
        };
        let t = first.len();
        write!(w, "step")?;
        for i in 0..t {
            for j in 0..t {
                write!(w, ",a_{i}_{j}")?;
            }
        }
        writeln!(w)?;
        for (n, s) in self.snapshots.iter().enumerate() {
            write!(w, "{n}")?;
            for v in s.values.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Raw stepping output: every field snapshot, the wave velocities when the
/// kind is `Wave`, and per-step pre-normalization row masses.
#[derive(Debug, Clone)]
pub struct Steps {
    pub fields: Vec<Array2<f64>>,
    pub velocities: Option<Vec<Array2<f64>>>,
    pub masses: Vec<Option<Vec<f64>>>,
}

fn check_finite(a: &Array2<f64>, step: usize) -> Result<()> {
    let mut max = 0.0f64;
    for &x in a.iter() {
        if !x.is_finite() {
            return Err(Error::Divergence {
                step,
                reason: "non-finite entry".into(),
            });
        }
        max = max.max(x.abs());
    }
    if max > DIVERGENCE_LIMIT {
        return Err(Error::Divergence {
            step,
            reason: format!("max |entry| = {max:e} exceeds {DIVERGENCE_LIMIT:e}"),
        });
    }
    Ok(())
}

/// Apply the configured kernel `cfg.n_steps` times with coefficients
/// `coeffs` (which override those in `cfg`). No metrics are computed.
pub fn run_steps(
    a0: &Array2<f64>,
    causal: bool,
    cfg: &PdeConfig,
    coeffs: &Coefficients,
) -> Result<Steps> {
    cfg.validate_with(coeffs)?;
    let dom = cfg.domain(causal);
    dom.validate()?;
    let settings = cfg.settings();
    let mut fields = Vec::with_capacity(cfg.n_steps + 1);
    let mut masses = Vec::with_capacity(cfg.n_steps);
    fields.push(a0.clone());
    let mut velocities = (cfg.kind == PdeKind::Wave).then(|| {
        let mut v = Vec::with_capacity(cfg.n_steps + 1);
        v.push(Array2::zeros(a0.raw_dim()));
        v
    });
    for n in 0..cfg.n_steps {
        let a = &fields[n];
        let v = velocities.as_ref().map(|vs| &vs[n]);
        let (raw, v_new) = raw_update(cfg.kind, &dom, cfg.scheme, coeffs, cfg.dt, a, v);
        check_finite(&raw, n + 1)?;
        let (out, mass) = postprocess(raw, &settings).map_err(|e| Error::AtStep {
            step: n + 1,
            source: Box::new(e),
        })?;
        check_finite(&out, n + 1)?;
        if let (Some(vs), Some(v_new)) = (velocities.as_mut(), v_new) {
            check_finite(&v_new, n + 1)?;
            vs.push(v_new);
        }
        fields.push(out);
        masses.push(mass);
    }
    Ok(Steps {
        fields,
        velocities,
        masses,
    })
}

/// Evolve `a0` under `cfg`, keeping every snapshot and its metrics.
pub fn evolve(a0: &AttentionField, cfg: &PdeConfig) -> Result<Trajectory> {
    evolve_with(a0, cfg, &cfg.coefficients())
}

pub fn evolve_with(a0: &AttentionField, cfg: &PdeConfig, coeffs: &Coefficients) -> Result<Trajectory> {
    let t = a0.len();
    if a0.values.ncols() != t || t < 2 {
        return Err(Error::shape("square field with T >= 2", format!("{:?}", a0.values.dim())));
    }
    if a0.bc != cfg.bc && !a0.causal {
        return Err(Error::InvalidConfig(format!(
            "field boundary {:?} does not match config boundary {:?}",
            a0.bc, cfg.bc
        )));
    }
    let steps = run_steps(&a0.values, a0.causal, cfg, coeffs)?;
    let initial_sums = a0.row_sums();
    let snapshots: Vec<AttentionField> =
        steps.fields.into_iter().map(|v| a0.with_values(v)).collect();
    let step_metrics = snapshots
        .iter()
        .enumerate()
        .map(|(n, f)| {
            let d = DynamicsMetrics::of(f, cfg.axis);
            let drift = f
                .row_sums()
                .iter()
                .zip(&initial_sums)
                .fold(0.0f64, |m, (s, s0)| m.max((s - s0).abs()));
            StepMetrics {
                step: n,
                smoothness: d.smoothness,
                consistency: d.consistency,
                range: d.range,
                row_sum_drift: drift,
                max_entry: f.max_abs(),
                pre_norm_mass: n
                    .checked_sub(1)
                    .and_then(|k| steps.masses[k].as_ref())
                    .map(|m| m.iter().sum()),
            }
        })
        .collect();
    Ok(Trajectory {
        snapshots,
        step_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryCondition;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_steps_is_identity() {
        let a = AttentionField::one_hot(5, BoundaryCondition::Periodic).unwrap();
        let tr = evolve(&a, &PdeConfig::diffusion(0.1, 1.0, 0)).unwrap();
        assert_eq!(tr.snapshots.len(), 1);
        assert_eq!(tr.snapshots[0], a);
        assert_eq!(tr.step_metrics.len(), 1);
    }

    #[test]
    fn two_diffusion_steps() {
        let a = AttentionField::one_hot(4, BoundaryCondition::Periodic).unwrap();
        let tr = evolve(&a, &PdeConfig::diffusion(0.1, 1.0, 2)).unwrap();
        let row = tr.last().values.row(0).to_vec();
        for (g, w) in row.iter().zip([0.66, 0.16, 0.02, 0.16]) {
            assert_abs_diff_eq!(*g, w, epsilon = 1e-14);
        }
        assert_eq!(tr.snapshots.len(), 3);
        assert!(tr.step_metrics.iter().all(|m| m.row_sum_drift < 1e-14));
    }

    #[test]
    fn unstable_step_diverges() {
        let t = 8;
        let a = AttentionField::one_hot(t, BoundaryCondition::Periodic).unwrap();
        let mut cfg = PdeConfig::diffusion(0.1, 1.01 * 5.0, 2000);
        cfg.stability_guard = false;
        match evolve(&a, &cfg) {
            Err(Error::Divergence { step, .. }) => assert!(step > 200 && step < 2000, "{step}"),
            other => panic!("expected divergence, got {:?}", other.map(|t| t.snapshots.len())),
        }
        cfg.stability_guard = true;
        assert!(matches!(evolve(&a, &cfg), Err(Error::Stability { .. })));
    }

    #[test]
    fn boundary_mismatch_rejected() {
        let a = AttentionField::one_hot(4, BoundaryCondition::ZeroFlux).unwrap();
        assert!(evolve(&a, &PdeConfig::diffusion(0.1, 1.0, 1)).is_err());
    }

    #[test]
    fn renormalized_mass_is_logged() {
        let a = AttentionField::uniform(4, BoundaryCondition::Periodic).unwrap();
        let mut cfg = PdeConfig::reaction_diffusion(0.1, 0.5, 1.0, 1);
        cfg.renormalize_rows = true;
        let tr = evolve(&a, &cfg).unwrap();
        // each entry 0.25 + 0.5 * 0.25 * 0.75
        let expected = 16.0 * (0.25 + 0.5 * 0.25 * 0.75);
        assert_abs_diff_eq!(tr.step_metrics[1].pre_norm_mass.unwrap(), expected, epsilon = 1e-12);
        assert!(tr.step_metrics[0].pre_norm_mass.is_none());
    }

    #[test]
    fn csv_layout() {
        let a = AttentionField::one_hot(2, BoundaryCondition::Periodic).unwrap();
        let tr = evolve(&a, &PdeConfig::diffusion(0.1, 1.0, 1)).unwrap();
        let mut buf = Vec::new();
        tr.write_metrics_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "step,S,C,R,row_sum_drift,max_entry");
        assert_eq!(lines.len(), 3);
        let mut buf = Vec::new();
        tr.write_snapshots_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("step,a_0_0,a_0_1,a_1_0,a_1_1\n0,1,0,0,1\n"));
    }
}
