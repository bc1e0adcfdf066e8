//! Wall-clock timing of single PDE steps on dense fields.
//!
//! Each step touches all T^2 entries, so the cost is expected to grow
//! quadratically with T. The sparse hybrid pattern would make the
//! stencil work O(T * window), but the dense representation used here
//! does not exploit that.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::random_attention_field;
use crate::error::{Error, Result};
use crate::hybrid::linear_fit;
use crate::pde::{
    advection_diffusion_step, diffusion_step, reaction_diffusion_step, wave_step, PdeConfig, PdeKind, WaveState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub kind: PdeKind,
    pub t: usize,
    pub ns_per_step: f64,
}

/// Median time of one step of `kind` on a T x T softmax field. Steps are
/// repeated in batches of at least `min_batch` wall time; `batches`
/// medians are taken.
pub fn time_step(kind: PdeKind, t: usize, batches: usize, min_batch: Duration) -> Result<f64> {
    if batches == 0 {
        return Err(Error::InvalidInput("need at least one timing batch".into()));
    }
    let a = random_attention_field(t, 8, &mut ChaCha8Rng::seed_from_u64(t as u64))?;
    let cfg = PdeConfig::reference(kind, 1);
    let s = cfg.settings();
    let wave = WaveState::at_rest(a.clone());
    let step = || -> Result<f64> {
        Ok(match kind {
            PdeKind::Diffusion => diffusion_step(&a, cfg.alpha, cfg.dt, &s)?.values[(0, 0)],
            PdeKind::ReactionDiffusion => reaction_diffusion_step(&a, cfg.alpha, cfg.beta, cfg.dt, &s)?.values[(0, 0)],
            PdeKind::AdvectionDiffusion => {
                advection_diffusion_step(&a, cfg.alpha, cfg.beta, cfg.dt, &s)?.values[(0, 0)]
            }
            PdeKind::Wave => wave_step(&wave, cfg.c, cfg.dt, &s)?.a.values[(0, 0)],
        })
    };
    // one untimed warm-up step
    std::hint::black_box(step()?);
    let mut samples = Vec::with_capacity(batches);
    for _ in 0..batches {
        let start = Instant::now();
        let mut reps = 0u32;
        while reps == 0 || start.elapsed() < min_batch {
            std::hint::black_box(step()?);
            reps += 1;
        }
        samples.push(start.elapsed().as_nanos() as f64 / reps as f64);
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[samples.len() / 2])
}

/// Least-squares slope of `log ns` against `log T` with its correlation.
pub fn scaling_exponent(points: &[BenchPoint]) -> Option<(f64, f64)> {
    let x: Vec<f64> = points.iter().map(|p| (p.t as f64).ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.ns_per_step.ln()).collect();
    linear_fit(&x, &y).map(|(slope, _, r)| (slope, r))
}

/// Time every kind at every size.
pub fn run_bench(kinds: &[PdeKind], sizes: &[usize], batches: usize, min_batch: Duration) -> Result<Vec<BenchPoint>> {
    let mut out = Vec::with_capacity(kinds.len() * sizes.len());
    for &kind in kinds {
        for &t in sizes {
            out.push(BenchPoint {
                kind,
                t,
                ns_per_step: time_step(kind, t, batches, min_batch)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponent_of_exact_power_law() {
        let pts: Vec<BenchPoint> = [16usize, 32, 64]
            .iter()
            .map(|&t| BenchPoint {
                kind: PdeKind::Diffusion,
                t,
                ns_per_step: 3.0 * (t * t) as f64,
            })
            .collect();
        let (slope, r) = scaling_exponent(&pts).unwrap();
        assert!((slope - 2.0).abs() < 1e-12 && r > 0.999_999);
    }

    #[test]
    fn timing_is_positive_for_every_kind() {
        for kind in PdeKind::ALL {
            assert!(time_step(kind, 16, 1, Duration::from_micros(50)).unwrap() > 0.0);
        }
    }
}
