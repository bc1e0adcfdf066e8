//! Pseudo-time evolution of attention fields.
//!
//! Four explicit schemes are provided: diffusion, wave (velocity-first
//! symplectic Euler), reaction-diffusion with a logistic source, and
//! advection-diffusion with an upwind transport term. All share the
//! stencils in [`crate::grid`] and a common post-processing stage
//! (optional non-negativity clamp and row renormalization).

mod adjoint;
mod evolve;
mod kernels;

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisMode, BoundaryCondition, Domain, GradientScheme};

pub use adjoint::{step_adjoint, StepAdjoint};
pub use evolve::{evolve, evolve_with, run_steps, StepMetrics, Steps, Trajectory};
pub use kernels::{
    advection_diffusion_step, diffusion_step, reaction_diffusion_step, wave_step, StepSettings,
};

/// Any entry beyond this magnitude counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Reference coefficients used for `T = 512` sequences.
pub const ALPHA_REF: f64 = 0.10;
pub const SEQ_LEN_REF: usize = 512;
pub const WAVE_SPEED_DEFAULT: f64 = 0.15;
pub const REACTION_BETA_DEFAULT: f64 = 0.02;
pub const ADVECTION_BETA_DEFAULT: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    #[default]
    Diffusion,
    Wave,
    ReactionDiffusion,
    AdvectionDiffusion,
}

impl PdeKind {
    pub const ALL: [PdeKind; 4] = [
        PdeKind::Diffusion,
        PdeKind::Wave,
        PdeKind::ReactionDiffusion,
        PdeKind::AdvectionDiffusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PdeKind::Diffusion => "diffusion",
            PdeKind::Wave => "wave",
            PdeKind::ReactionDiffusion => "reaction_diffusion",
            PdeKind::AdvectionDiffusion => "advection_diffusion",
        }
    }
}

impl std::str::FromStr for PdeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PdeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown PDE kind `{s}`")))
    }
}

/// PDE coefficients that may be learned per head.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Coefficients {
    pub alpha: f64,
    pub beta: f64,
    pub c: f64,
}

impl std::ops::AddAssign for Coefficients {
    fn add_assign(&mut self, rhs: Self) {
        self.alpha += rhs.alpha;
        self.beta += rhs.beta;
        self.c += rhs.c;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdeConfig {
    pub kind: PdeKind,
    pub alpha: f64,
    pub beta: f64,
    /// Wave speed.
    pub c: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub bc: BoundaryCondition,
    pub axis: AxisMode,
    pub scheme: GradientScheme,
    pub renormalize_rows: bool,
    pub clamp_nonnegative: bool,
    pub stability_guard: bool,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            kind: PdeKind::Diffusion,
            alpha: ALPHA_REF,
            beta: 0.0,
            c: WAVE_SPEED_DEFAULT,
            dt: 1.0,
            n_steps: 4,
            bc: BoundaryCondition::Periodic,
            axis: AxisMode::PerRow1d,
            scheme: GradientScheme::Upwind,
            renormalize_rows: false,
            clamp_nonnegative: false,
            stability_guard: true,
        }
    }
}

impl PdeConfig {
    pub fn diffusion(alpha: f64, dt: f64, n_steps: usize) -> Self {
        PdeConfig {
            alpha,
            dt,
            n_steps,
            ..Default::default()
        }
    }

    pub fn wave(c: f64, dt: f64, n_steps: usize) -> Self {
        PdeConfig {
            kind: PdeKind::Wave,
            alpha: 0.0,
            c,
            dt,
            n_steps,
            ..Default::default()
        }
    }

    pub fn reaction_diffusion(alpha: f64, beta: f64, dt: f64, n_steps: usize) -> Self {
        PdeConfig {
            kind: PdeKind::ReactionDiffusion,
            alpha,
            beta,
            dt,
            n_steps,
            ..Default::default()
        }
    }

    pub fn advection_diffusion(alpha: f64, beta: f64, dt: f64, n_steps: usize) -> Self {
        PdeConfig {
            kind: PdeKind::AdvectionDiffusion,
            alpha,
            beta,
            dt,
            n_steps,
            ..Default::default()
        }
    }

    /// Table coefficients for each variant at unit step.
    pub fn reference(kind: PdeKind, n_steps: usize) -> Self {
        match kind {
            PdeKind::Diffusion => Self::diffusion(ALPHA_REF, 1.0, n_steps),
            PdeKind::Wave => Self::wave(WAVE_SPEED_DEFAULT, 1.0, n_steps),
            PdeKind::ReactionDiffusion => {
                Self::reaction_diffusion(ALPHA_REF, REACTION_BETA_DEFAULT, 1.0, n_steps)
            }
            PdeKind::AdvectionDiffusion => {
                Self::advection_diffusion(ALPHA_REF, ADVECTION_BETA_DEFAULT, 1.0, n_steps)
            }
        }
    }

    pub fn coefficients(&self) -> Coefficients {
        Coefficients {
            alpha: self.alpha,
            beta: self.beta,
            c: self.c,
        }
    }

    pub fn domain(&self, causal: bool) -> Domain {
        Domain {
            bc: if causal {
                BoundaryCondition::ZeroFlux
            } else {
                self.bc
            },
            axis: self.axis,
            causal,
        }
    }

    pub fn settings(&self) -> StepSettings {
        StepSettings {
            axis: self.axis,
            scheme: self.scheme,
            guard: self.stability_guard,
            renormalize_rows: self.renormalize_rows,
            clamp_nonnegative: self.clamp_nonnegative,
        }
    }

    /// Structural checks plus, when the guard is on, the CFL bounds.
    pub fn validate(&self) -> Result<()> {
        self.validate_with(&self.coefficients())
    }

    pub fn validate_with(&self, coeffs: &Coefficients) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        for (name, v) in [("alpha", coeffs.alpha), ("c", coeffs.c)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        if !coeffs.beta.is_finite() {
            return Err(Error::InvalidConfig("beta must be finite".into()));
        }
        if self.stability_guard {
            check_stability(self.kind, self.axis, coeffs, self.dt)?;
        }
        Ok(())
    }
}

/// Largest stable step on the unit lattice: `1 / (2 alpha)` for the
/// diffusive kinds and `1 / c` for the wave equation.
pub fn cfl_max_step(kind: PdeKind, alpha: f64, c: f64) -> Result<f64> {
    cfl_max_step_for_axis(kind, alpha, c, AxisMode::PerRow1d)
}

/// CFL bound accounting for the stencil dimension: the 2-D five-point
/// Laplacian has twice the spectral radius of the 1-D one.
pub fn cfl_max_step_for_axis(kind: PdeKind, alpha: f64, c: f64, axis: AxisMode) -> Result<f64> {
    let dims = match axis {
        AxisMode::PerRow1d => 1.0,
        AxisMode::Full2d => 2.0,
    };
    match kind {
        PdeKind::Wave => {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("wave speed must be > 0, got {c}")));
            }
            Ok(1.0 / (c * f64::sqrt(dims)))
        }
        _ => {
            if !(alpha > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "diffusion coefficient must be > 0, got {alpha}"
                )));
            }
            Ok(1.0 / (2.0 * alpha * dims))
        }
    }
}

/// Enforce the CFL bounds for `kind` at step `dt`. Zero coefficients are
/// unconditionally stable.
pub fn check_stability(
    kind: PdeKind,
    axis: AxisMode,
    coeffs: &Coefficients,
    dt: f64,
) -> Result<()> {
    let primary = match kind {
        PdeKind::Wave => coeffs.c,
        _ => coeffs.alpha,
    };
    if primary > 0.0 {
        let dt_max = cfl_max_step_for_axis(kind, coeffs.alpha, coeffs.c, axis)?;
        // relative slack so dt == dt_max computed through a division still passes
        if dt > dt_max * (1.0 + 1e-12) {
            return Err(Error::Stability {
                dt,
                dt_max,
                detail: format!("{} CFL bound", kind.name()),
            });
        }
    }
    if matches!(kind, PdeKind::ReactionDiffusion | PdeKind::AdvectionDiffusion)
        && dt * coeffs.beta.abs() > 1.0
    {
        return Err(Error::Stability {
            dt,
            dt_max: 1.0 / coeffs.beta.abs(),
            detail: "dt * |beta| must not exceed 1".into(),
        });
    }
    Ok(())
}

/// Sequence-length scaled defaults: `alpha ~ 1/T^2`, `dt ~ 1/T`, clamped to
/// the CFL region.
pub fn suggest_params(t: usize, kind: PdeKind) -> Result<PdeConfig> {
    if t < 2 {
        return Err(Error::InvalidInput(format!("sequence length must be >= 2, got {t}")));
    }
    let ratio = SEQ_LEN_REF as f64 / t as f64;
    let mut cfg = PdeConfig::reference(kind, 4);
    cfg.dt = ratio.min(1.0);
    match kind {
        PdeKind::Wave => {
            cfg.dt = cfg.dt.min(1.0 / cfg.c);
        }
        _ => {
            cfg.alpha = ALPHA_REF * ratio * ratio;
            let dt_max = 1.0 / (2.0 * cfg.alpha);
            cfg.dt = cfg.dt.min(dt_max);
            if cfg.beta.abs() > 0.0 {
                cfg.dt = cfg.dt.min(1.0 / cfg.beta.abs());
            }
        }
    }
    Ok(cfg)
}

/// A square field of attention weights plus the boundary condition that
/// governs its stencils.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionField {
    pub values: Array2<f64>,
    pub bc: BoundaryCondition,
    /// Row `i` is supported on keys `0..=i` only.
    #[serde(default)]
    pub causal: bool,
}

impl AttentionField {
    pub fn new(values: Array2<f64>, bc: BoundaryCondition) -> Result<Self> {
        let (m, n) = values.dim();
        if m != n || n < 2 {
            return Err(Error::shape("square matrix with T >= 2", format!("{m}x{n}")));
        }
        Ok(AttentionField {
            values,
            bc,
            causal: false,
        })
    }

    pub fn causal(values: Array2<f64>) -> Result<Self> {
        let mut f = Self::new(values, BoundaryCondition::ZeroFlux)?;
        f.causal = true;
        Ok(f)
    }

    pub fn uniform(t: usize, bc: BoundaryCondition) -> Result<Self> {
        Self::new(Array2::from_elem((t, t), 1.0 / t as f64), bc)
    }

    /// Identity matrix: each query puts all its mass on itself.
    pub fn one_hot(t: usize, bc: BoundaryCondition) -> Result<Self> {
        Self::new(Array2::eye(t), bc)
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain(&self, axis: AxisMode) -> Domain {
        Domain {
            bc: self.bc,
            axis,
            causal: self.causal,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values.sum_axis(Axis(1)).to_vec()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn with_values(&self, values: Array2<f64>) -> Self {
        AttentionField {
            values,
            bc: self.bc,
            causal: self.causal,
        }
    }
}

/// Field plus velocity for the second-order wave scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub a: AttentionField,
    pub v: Array2<f64>,
}

impl WaveState {
    /// Starts at rest.
    pub fn at_rest(a: AttentionField) -> Self {
        let v = Array2::zeros(a.values.raw_dim());
        WaveState { a, v }
    }
}
