//! WebAssembly bindings for the browser demo. Each exported function has a
//! plain Rust counterpart (the `*_values` functions) that the native tests
//! exercise directly.

use ndarray::Array2;
use pde_attention::attention::random_attention_field;
use pde_attention::grid::{dft_row, mode_eigenvalues, BoundaryCondition};
use pde_attention::hybrid::{hybrid_error_experiment, SparsePattern};
use pde_attention::metrics::random_simplex;
use pde_attention::pde::{evolve, run_steps, AttentionField, PdeConfig, PdeKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

/// Caps that keep a single call well under a second in the browser.
pub const MAX_T: usize = 128;
pub const MAX_STEPS: usize = 400;

fn limits(t: usize, steps: usize) -> Result<(), String> {
    if !(2..=MAX_T).contains(&t) {
        return Err(format!("T must be between 2 and {MAX_T}"));
    }
    if steps > MAX_STEPS {
        return Err(format!("at most {MAX_STEPS} steps"));
    }
    Ok(())
}

fn pde_config(kind: &str, coefficient: f64, beta: f64, dt: f64, steps: usize) -> Result<PdeConfig, String> {
    let kind: PdeKind = kind.parse().map_err(|e: pde_attention::Error| e.to_string())?;
    let mut cfg = match kind {
        PdeKind::Diffusion => PdeConfig::diffusion(coefficient, dt, steps),
        PdeKind::Wave => PdeConfig::wave(coefficient, dt, steps),
        PdeKind::ReactionDiffusion => PdeConfig::reaction_diffusion(coefficient, beta, dt, steps),
        PdeKind::AdvectionDiffusion => PdeConfig::advection_diffusion(coefficient, beta, dt, steps),
    };
    cfg.renormalize_rows = matches!(kind, PdeKind::ReactionDiffusion | PdeKind::AdvectionDiffusion);
    Ok(cfg)
}

/// Every snapshot of an evolved field, row-major and concatenated:
/// `(steps + 1) * T * T` values. `coefficient` is the diffusivity, or the
/// wave speed for the wave kind.
#[allow(clippy::too_many_arguments)]
pub fn evolve_values(
    kind: &str,
    t: usize,
    coefficient: f64,
    beta: f64,
    dt: f64,
    steps: usize,
    init: &str,
    seed: u64,
) -> Result<Vec<f64>, String> {
    limits(t, steps)?;
    let cfg = pde_config(kind, coefficient, beta, dt, steps)?;
    let bc = BoundaryCondition::Periodic;
    let a0 = match init {
        "onehot" => AttentionField::one_hot(t, bc),
        "softmax" => random_attention_field(t, 4, &mut ChaCha8Rng::seed_from_u64(seed)),
        other => return Err(format!("unknown initial field `{other}` (onehot | softmax)")),
    }
    .map_err(|e| e.to_string())?;
    let traj = evolve(&a0, &cfg).map_err(|e| e.to_string())?;
    Ok(traj.snapshots.iter().flat_map(|s| s.values.iter().copied()).collect())
}

/// Per-mode decay of one random row after `steps` periodic diffusion steps:
/// the first `T` values are the measured `|c_k(n)| / |c_k(0)|`, the next
/// `T` the predicted `|1 - alpha dt lambda_k|^n`.
pub fn mode_decay_values(t: usize, alpha_dt: f64, steps: usize, seed: u64) -> Result<Vec<f64>, String> {
    limits(t, steps)?;
    let cfg = PdeConfig::diffusion(alpha_dt, 1.0, steps);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a0 = random_simplex(t, &mut rng);
    let row = rng.random_range(0..t);
    let out = run_steps(&a0, false, &cfg, &cfg.coefficients()).map_err(|e| e.to_string())?;
    let last = out.fields.last().expect("initial field is kept");
    let c0 = dft_row(&a0.row(row).to_vec()).map_err(|e| e.to_string())?.coefficients;
    let cn = dft_row(&last.row(row).to_vec()).map_err(|e| e.to_string())?.coefficients;
    let measured = c0.iter().zip(&cn).map(|(a, b)| b.norm() / a.norm().max(f64::MIN_POSITIVE));
    let predicted = mode_eigenvalues(t)
        .into_iter()
        .map(|lam| (1.0 - alpha_dt * lam).abs().powi(steps as i32));
    Ok(measured.chain(predicted).collect())
}

/// Frobenius error of the hybrid field against dense softmax attention at
/// each refinement step (`steps + 1` values), followed by the geometric
/// prediction `eps_0 rho^n` when it applies (uniform target), or NaNs.
pub fn hybrid_error_values(
    t: usize,
    window: usize,
    alpha: f64,
    steps: usize,
    uniform_target: bool,
    seed: u64,
) -> Result<Vec<f64>, String> {
    limits(t, steps)?;
    let (q, k) = if uniform_target {
        (Array2::zeros((t, 4)), Array2::zeros((t, 4)))
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || Array2::from_shape_fn((t, 4), |_| rng.random_range(-1.5..1.5));
        (draw(), draw())
    };
    let cfg = PdeConfig::diffusion(alpha, 1.0, steps);
    let report = hybrid_error_experiment(&q, &k, &SparsePattern::new(window, [0]), &cfg).map_err(|e| e.to_string())?;
    let rho = (-report.predicted_decay_rate).exp();
    let predicted = (0..=steps).map(|n| {
        if report.stationary {
            report.epsilon_0 * rho.powi(n as i32)
        } else {
            f64::NAN
        }
    });
    Ok(report.errors.iter().copied().chain(predicted).collect())
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn evolve_field(
    kind: &str,
    t: usize,
    coefficient: f64,
    beta: f64,
    dt: f64,
    steps: usize,
    init: &str,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    evolve_values(kind, t, coefficient, beta, dt, steps, init, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn mode_decay(t: usize, alpha_dt: f64, steps: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    mode_decay_values(t, alpha_dt, steps, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn hybrid_error(
    t: usize,
    window: usize,
    alpha: f64,
    steps: usize,
    uniform_target: bool,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    hybrid_error_values(t, window, alpha, steps, uniform_target, seed.into()).map_err(|e| JsError::new(&e))
}
