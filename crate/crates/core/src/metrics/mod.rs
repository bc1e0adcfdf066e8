//! Attention-dynamics metrics and perplexity.

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisMode, BoundaryCondition};
use crate::pde::AttentionField;

mod verify;

pub use verify::{
    cfl_negative_control, heat_kernel_solution, mode_decay_battery, random_simplex, run_suite,
    smoothness_battery, verify_conservation, verify_hybrid_bound, verify_mode_decay,
    verify_multilayer_error, verify_preconditioned_descent, verify_propagation_speed,
    verify_smoothness_decay, VerificationReport, SUITE_NAMES,
};

/// Default fraction of row mass the effective range window must cover.
pub const RANGE_MASS: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsMetrics {
    pub smoothness: f64,
    pub consistency: f64,
    pub range: f64,
}

impl DynamicsMetrics {
    /// `range` is NaN when some row has no positive mass.
    pub fn of(a: &AttentionField, mode: AxisMode) -> Self {
        DynamicsMetrics {
            smoothness: smoothness(a, mode),
            consistency: consistency(a),
            range: effective_range_clamped(a, RANGE_MASS).unwrap_or(f64::NAN),
        }
    }
}

/// Squared Frobenius norm of the Laplacian image.
pub fn smoothness(a: &AttentionField, mode: AxisMode) -> f64 {
    a.domain(mode).laplacian(&a.values).iter().map(|x| x * x).sum()
}

/// Population variance over all entries.
pub fn consistency(a: &AttentionField) -> f64 {
    variance(&a.values)
}

fn variance(v: &Array2<f64>) -> f64 {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Mean over rows of the narrowest contiguous window (wrapping for periodic
/// fields) that holds at least `mass` of the row total.
pub fn effective_range(a: &AttentionField, mass: f64) -> Result<f64> {
    if !(mass > 0.0 && mass <= 1.0) {
        return Err(Error::InvalidInput(format!("mass fraction must be in (0, 1], got {mass}")));
    }
    let wrap = a.bc == BoundaryCondition::Periodic && !a.causal;
    let mut total = 0.0;
    for (i, row) in a.values.axis_iter(Axis(0)).enumerate() {
        let n = if a.causal { i + 1 } else { row.len() };
        let row = row.slice_move(ndarray::s![..n]);
        if row.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidInput(format!("row {i} has negative entries")));
        }
        total += row_window(row, mass, wrap).ok_or(Error::DegenerateField {
            row: i,
            mass: row.sum(),
        })? as f64;
    }
    Ok(total / a.values.nrows() as f64)
}

/// Effective range of the positive part; used for reporting on fields that
/// may go slightly negative (wave, unstable runs).
pub fn effective_range_clamped(a: &AttentionField, mass: f64) -> Result<f64> {
    let clamped = a.with_values(a.values.mapv(|x| x.max(0.0)));
    effective_range(&clamped, mass)
}

pub(crate) fn row_window(row: ArrayView1<f64>, mass: f64, wrap: bool) -> Option<usize> {
    let n = row.len();
    let total: f64 = row.sum();
    if !(total > 0.0) {
        return None;
    }
    let target = mass * total - 1e-12 * total;
    let len = if wrap { 2 * n } else { n };
    let mut prefix = Vec::with_capacity(len + 1);
    prefix.push(0.0);
    for k in 0..len {
        prefix.push(prefix[k] + row[k % n]);
    }
    let mut best = n;
    for start in 0..n {
        let max_end = if wrap { start + n } else { n };
        // smallest end with prefix[end] - prefix[start] >= target
        let (mut lo, mut hi) = (start + 1, max_end);
        if prefix[hi] - prefix[start] < target {
            continue;
        }
        while lo < hi {
            let mid = (lo + hi) / 2;
            if prefix[mid] - prefix[start] >= target {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        best = best.min(lo - start);
    }
    Some(best)
}

/// `exp` of the mean token cross-entropy. `logits` is `(tokens, vocab)`.
pub fn perplexity(logits: &Array2<f64>, targets: &[usize]) -> Result<f64> {
    Ok(mean_cross_entropy(logits, targets)?.exp())
}

pub fn mean_cross_entropy(logits: &Array2<f64>, targets: &[usize]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::InvalidInput("empty sequence".into()));
    }
    if logits.nrows() != targets.len() {
        return Err(Error::shape(
            format!("{} logit rows", targets.len()),
            format!("{}", logits.nrows()),
        ));
    }
    let mut total = 0.0;
    for (row, &t) in logits.axis_iter(Axis(0)).zip(targets) {
        if t >= row.len() {
            return Err(Error::InvalidInput(format!("target {t} outside vocab {}", row.len())));
        }
        total += log_sum_exp(row) - row[t];
    }
    Ok(total / targets.len() as f64)
}

pub fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}
