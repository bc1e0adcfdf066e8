//! Reverse-mode adjoints of the explicit step kernels.
//!
//! Each step is `out = post(raw(A, V))`. The backward pass recomputes `raw`
//! from the stored input, pulls the output gradient back through the
//! post-processing (clamp, renormalization) and then through the linear or
//! logistic update.

use ndarray::{Array2, Axis, Zip};

use super::kernels::raw_update;
use super::{Coefficients, PdeConfig, PdeKind};
use crate::error::{Error, Result};
use crate::grid::inner;

#[derive(Debug, Clone)]
pub struct StepAdjoint {
    /// Gradient with respect to the input field.
    pub grad_a: Array2<f64>,
    /// Gradient with respect to the input velocity (wave only).
    pub grad_v: Option<Array2<f64>>,
    pub grad_coeffs: Coefficients,
}

/// Pull `grad_out` (and `grad_v_out` for the wave kind) back through one
/// step taken from `a_in` (and `v_in`).
#[allow(clippy::too_many_arguments)]
pub fn step_adjoint(
    cfg: &PdeConfig,
    causal: bool,
    coeffs: &Coefficients,
    a_in: &Array2<f64>,
    v_in: Option<&Array2<f64>>,
    grad_out: &Array2<f64>,
    grad_v_out: Option<&Array2<f64>>,
) -> Result<StepAdjoint> {
    if grad_out.dim() != a_in.dim() {
        return Err(Error::shape(format!("{:?}", a_in.dim()), format!("{:?}", grad_out.dim())));
    }
    let dom = cfg.domain(causal);
    let dt = cfg.dt;
    let (raw, _) = raw_update(cfg.kind, &dom, cfg.scheme, coeffs, dt, a_in, v_in);

    let mut g = grad_out.clone();
    if cfg.renormalize_rows {
        let clamped = if cfg.clamp_nonnegative {
            raw.mapv(|x| x.max(0.0))
        } else {
            raw.clone()
        };
        for (mut gr, xr) in g.axis_iter_mut(Axis(0)).zip(clamped.axis_iter(Axis(0))) {
            let m: f64 = xr.sum();
            // d(x_j / m) pulled back: (g_j - sum_k g_k x_k / m) / m
            let proj = gr.iter().zip(xr.iter()).map(|(g, x)| g * x).sum::<f64>() / m;
            gr.mapv_inplace(|v| (v - proj) / m);
        }
    }
    if cfg.clamp_nonnegative {
        g.zip_mut_with(&raw, |g, &x| {
            if x <= 0.0 {
                *g = 0.0;
            }
        });
    }
    dom.mask_in_place(&mut g);

    let mut grad_coeffs = Coefficients::default();
    let (grad_a, grad_v) = match cfg.kind {
        PdeKind::Diffusion => {
            let lap_a = dom.laplacian(a_in);
            grad_coeffs.alpha = dt * inner(&g, &lap_a);
            let mut ga = dom.laplacian_transpose(&g);
            ga.zip_mut_with(&g, |l, &g| *l = g + dt * coeffs.alpha * *l);
            (ga, None)
        }
        PdeKind::ReactionDiffusion => {
            let lap_a = dom.laplacian(a_in);
            grad_coeffs.alpha = dt * inner(&g, &lap_a);
            grad_coeffs.beta = dt
                * Zip::from(&g)
                    .and(a_in)
                    .fold(0.0, |s, &g, &x| s + g * x * (1.0 - x));
            let lt = dom.laplacian_transpose(&g);
            let ga = Zip::from(&g)
                .and(&lt)
                .and(a_in)
                .map_collect(|&g, &l, &x| {
                    g + dt * (coeffs.alpha * l + coeffs.beta * (1.0 - 2.0 * x) * g)
                });
            (ga, None)
        }
        PdeKind::AdvectionDiffusion => {
            let lap_a = dom.laplacian(a_in);
            let grad_a = dom.gradient(a_in, cfg.scheme);
            grad_coeffs.alpha = dt * inner(&g, &lap_a);
            grad_coeffs.beta = -dt * inner(&g, &grad_a);
            let lt = dom.laplacian_transpose(&g);
            let dt_g = dom.gradient_transpose(&g, cfg.scheme);
            let ga = Zip::from(&g)
                .and(&lt)
                .and(&dt_g)
                .map_collect(|&g, &l, &d| g + dt * (coeffs.alpha * l - coeffs.beta * d));
            (ga, None)
        }
        PdeKind::Wave => {
            // A' = A + dt V',  V' = V + dt c^2 L(A)
            let mut gv = match grad_v_out {
                Some(gv) => gv + &(&g * dt),
                None => &g * dt,
            };
            dom.mask_in_place(&mut gv);
            let lap_a = dom.laplacian(a_in);
            grad_coeffs.c = 2.0 * coeffs.c * dt * inner(&gv, &lap_a);
            let c2 = coeffs.c * coeffs.c;
            let mut ga = dom.laplacian_transpose(&gv);
            ga.zip_mut_with(&g, |l, &g| *l = g + dt * c2 * *l);
            (ga, Some(gv))
        }
    };
    let mut grad_a = grad_a;
    dom.mask_in_place(&mut grad_a);
    Ok(StepAdjoint {
        grad_a,
        grad_v,
        grad_coeffs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{AxisMode, BoundaryCondition, GradientScheme};
    use crate::pde::run_steps;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_simplex(t: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut a = Array2::from_shape_fn((t, t), |_| rng.random_range(0.05..1.0));
        for mut r in a.axis_iter_mut(Axis(0)) {
            let s = r.sum();
            r.mapv_inplace(|x| x / s);
        }
        a
    }

    /// Scalar objective `<W, A(N)>` after `cfg.n_steps` steps.
    fn objective(a0: &Array2<f64>, w: &Array2<f64>, cfg: &PdeConfig, k: &Coefficients, causal: bool) -> f64 {
        let steps = run_steps(a0, causal, cfg, k).unwrap();
        inner(steps.fields.last().unwrap(), w)
    }

    fn backprop(a0: &Array2<f64>, w: &Array2<f64>, cfg: &PdeConfig, k: &Coefficients, causal: bool) -> (Array2<f64>, Coefficients) {
        let steps = run_steps(a0, causal, cfg, k).unwrap();
        let mut g = w.clone();
        let mut gv: Option<Array2<f64>> = None;
        let mut gk = Coefficients::default();
        for n in (0..cfg.n_steps).rev() {
            let v_in = steps.velocities.as_ref().map(|v| &v[n]);
            let adj = step_adjoint(cfg, causal, k, &steps.fields[n], v_in, &g, gv.as_ref()).unwrap();
            g = adj.grad_a;
            gv = adj.grad_v;
            gk += adj.grad_coeffs;
        }
        (g, gk)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
    }

    fn check(cfg: PdeConfig, causal: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 6;
        let mut a0 = random_simplex(t, &mut rng);
        cfg.domain(causal).mask_in_place(&mut a0);
        let w = Array2::from_shape_fn((t, t), |_| rng.random_range(-1.0..1.0));
        let k = cfg.coefficients();
        let (g, gk) = backprop(&a0, &w, &cfg, &k, causal);
        let eps = 1e-6;
        for idx in [(0usize, 0usize), (2, 3), (5, 1), (4, 4), (3, 5)] {
            if causal && idx.1 > idx.0 {
                assert_eq!(g[idx], 0.0);
                continue;
            }
            let mut p = a0.clone();
            p[idx] += eps;
            let mut m = a0.clone();
            m[idx] -= eps;
            let fd = (objective(&p, &w, &cfg, &k, causal) - objective(&m, &w, &cfg, &k, causal)) / (2.0 * eps);
            assert!(rel(g[idx], fd) < 1e-6, "{:?} {idx:?}: {} vs {fd}", cfg.kind, g[idx]);
        }
        let coeff_fd = |f: &dyn Fn(&mut Coefficients, f64)| {
            let mut kp = k;
            f(&mut kp, eps);
            let mut km = k;
            f(&mut km, -eps);
            (objective(&a0, &w, &cfg, &kp, causal) - objective(&a0, &w, &cfg, &km, causal)) / (2.0 * eps)
        };
        match cfg.kind {
            PdeKind::Wave => {
                let fd = coeff_fd(&|k, e| k.c += e);
                assert!(rel(gk.c, fd) < 1e-6, "dc {} vs {fd}", gk.c);
            }
            _ => {
                let fd = coeff_fd(&|k, e| k.alpha += e);
                assert!(rel(gk.alpha, fd) < 1e-6, "dalpha {} vs {fd}", gk.alpha);
                if cfg.kind != PdeKind::Diffusion {
                    let fd = coeff_fd(&|k, e| k.beta += e);
                    assert!(rel(gk.beta, fd) < 1e-6, "dbeta {} vs {fd}", gk.beta);
                }
            }
        }
    }

    #[test]
    fn adjoints_match_finite_differences() {
        for (i, kind) in PdeKind::ALL.into_iter().enumerate() {
            for bc in [BoundaryCondition::Periodic, BoundaryCondition::ZeroFlux] {
                let mut cfg = PdeConfig::reference(kind, 3);
                cfg.bc = bc;
                check(cfg.clone(), false, i as u64);
                cfg.renormalize_rows = true;
                check(cfg.clone(), false, 10 + i as u64);
                cfg.scheme = GradientScheme::Central;
                cfg.axis = AxisMode::Full2d;
                cfg.dt = 0.5;
                check(cfg, false, 20 + i as u64);
            }
            let mut cfg = PdeConfig::reference(kind, 3);
            cfg.bc = BoundaryCondition::ZeroFlux;
            cfg.renormalize_rows = true;
            check(cfg, true, 30 + i as u64);
        }
    }
}
