//! Discrete operators over token positions.
//!
//! Every stencil here lives on the unit lattice (grid spacing 1). Rows of an
//! attention field are treated as 1-D signals along the key axis; the
//! `Full2d` mode instead treats the whole `T x T` matrix as a 2-D field over
//! `(query, key)`.
//!
//! Forward operators gather from neighbors; the `*_transpose` variants
//! scatter with the same taps, so the pair is an exact adjoint by
//! construction rather than by symmetry of the stencil.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    #[default]
    Periodic,
    /// Homogeneous Neumann: an out-of-range neighbor takes the value of the
    /// boundary cell itself.
    ZeroFlux,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisMode {
    /// 3-point stencil along the key axis of each row independently.
    #[default]
    PerRow1d,
    /// 5-point stencil over the (query, key) plane.
    Full2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScheme {
    Central,
    /// Backward difference `row[j] - row[j-1]`, the upwind choice for
    /// transport toward increasing position.
    #[default]
    Upwind,
}

/// Index of the neighbor at offset `offset` from `j` on a line of `len` cells.
#[inline]
fn neighbor(j: usize, offset: isize, len: usize, bc: BoundaryCondition) -> usize {
    let k = j as isize + offset;
    match bc {
        BoundaryCondition::Periodic => k.rem_euclid(len as isize) as usize,
        BoundaryCondition::ZeroFlux => k.clamp(0, len as isize - 1) as usize,
    }
}

fn laplacian_row(src: ArrayView1<f64>, mut dst: ArrayViewMut1<f64>, bc: BoundaryCondition) {
    let n = src.len();
    if n < 2 {
        dst.fill(0.0);
        return;
    }
    for j in 0..n {
        let l = neighbor(j, -1, n, bc);
        let r = neighbor(j, 1, n, bc);
        dst[j] = src[l] - 2.0 * src[j] + src[r];
    }
}

fn laplacian_row_transpose(
    src: ArrayView1<f64>,
    mut dst: ArrayViewMut1<f64>,
    bc: BoundaryCondition,
) {
    let n = src.len();
    dst.fill(0.0);
    if n < 2 {
        return;
    }
    for j in 0..n {
        let l = neighbor(j, -1, n, bc);
        let r = neighbor(j, 1, n, bc);
        dst[l] += src[j];
        dst[r] += src[j];
        dst[j] -= 2.0 * src[j];
    }
}

fn gradient_row(
    src: ArrayView1<f64>,
    mut dst: ArrayViewMut1<f64>,
    bc: BoundaryCondition,
    scheme: GradientScheme,
) {
    let n = src.len();
    if n < 2 {
        dst.fill(0.0);
        return;
    }
    for j in 0..n {
        let l = neighbor(j, -1, n, bc);
        dst[j] = match scheme {
            GradientScheme::Central => 0.5 * (src[neighbor(j, 1, n, bc)] - src[l]),
            GradientScheme::Upwind => src[j] - src[l],
        };
    }
}

fn gradient_row_transpose(
    src: ArrayView1<f64>,
    mut dst: ArrayViewMut1<f64>,
    bc: BoundaryCondition,
    scheme: GradientScheme,
) {
    let n = src.len();
    dst.fill(0.0);
    if n < 2 {
        return;
    }
    for j in 0..n {
        let l = neighbor(j, -1, n, bc);
        match scheme {
            GradientScheme::Central => {
                let r = neighbor(j, 1, n, bc);
                dst[r] += 0.5 * src[j];
                dst[l] -= 0.5 * src[j];
            }
            GradientScheme::Upwind => {
                dst[j] += src[j];
                dst[l] -= src[j];
            }
        }
    }
}

/// Second difference `row[j-1] - 2 row[j] + row[j+1]` with boundary handling.
pub fn laplacian_1d(row: &[f64], bc: BoundaryCondition) -> Result<Vec<f64>> {
    if row.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "laplacian needs at least 2 cells, got {}",
            row.len()
        )));
    }
    let mut out = vec![0.0; row.len()];
    laplacian_row(
        ArrayView1::from(row),
        ArrayViewMut1::from(&mut out[..]),
        bc,
    );
    Ok(out)
}

/// First difference of a row, central or upwind.
pub fn gradient_1d(row: &[f64], bc: BoundaryCondition, scheme: GradientScheme) -> Result<Vec<f64>> {
    if row.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "gradient needs at least 2 cells, got {}",
            row.len()
        )));
    }
    let mut out = vec![0.0; row.len()];
    gradient_row(
        ArrayView1::from(row),
        ArrayViewMut1::from(&mut out[..]),
        bc,
        scheme,
    );
    Ok(out)
}

/// Spatial domain an attention field lives on.
///
/// With `causal` set, row `i` only has support on keys `0..=i`; the stencils
/// act on that prefix with zero-flux ends and leave the masked tail at zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Domain {
    pub bc: BoundaryCondition,
    pub axis: AxisMode,
    pub causal: bool,
}

impl Domain {
    pub fn new(bc: BoundaryCondition, axis: AxisMode) -> Self {
        Domain {
            bc,
            axis,
            causal: false,
        }
    }

    pub fn causal() -> Self {
        Domain {
            bc: BoundaryCondition::ZeroFlux,
            axis: AxisMode::PerRow1d,
            causal: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.causal && self.axis == AxisMode::Full2d {
            return Err(Error::InvalidConfig(
                "causal support is only defined for the per-row axis mode".into(),
            ));
        }
        Ok(())
    }

    /// Largest eigenvalue of `-L` on this domain; bounds the explicit step.
    pub fn laplacian_spectral_bound(&self) -> f64 {
        match self.axis {
            AxisMode::PerRow1d => 4.0,
            AxisMode::Full2d => 8.0,
        }
    }

    fn row_bc(&self) -> BoundaryCondition {
        if self.causal {
            BoundaryCondition::ZeroFlux
        } else {
            self.bc
        }
    }

    fn active_len(&self, row: usize, t: usize) -> usize {
        if self.causal {
            row + 1
        } else {
            t
        }
    }

    fn per_row<F>(&self, a: &Array2<f64>, f: F) -> Array2<f64>
    where
        F: Fn(ArrayView1<f64>, ArrayViewMut1<f64>, BoundaryCondition),
    {
        let t = a.ncols();
        let bc = self.row_bc();
        let mut out = Array2::zeros(a.raw_dim());
        for (i, (src, mut dst)) in a
            .axis_iter(Axis(0))
            .zip(out.axis_iter_mut(Axis(0)))
            .enumerate()
        {
            let n = self.active_len(i, t).min(t);
            f(
                src.slice_move(ndarray::s![..n]),
                dst.slice_mut(ndarray::s![..n]),
                bc,
            );
        }
        out
    }

    pub fn laplacian(&self, a: &Array2<f64>) -> Array2<f64> {
        match self.axis {
            AxisMode::PerRow1d => self.per_row(a, laplacian_row),
            AxisMode::Full2d => laplacian_2d(a, self.bc),
        }
    }

    pub fn laplacian_transpose(&self, a: &Array2<f64>) -> Array2<f64> {
        match self.axis {
            AxisMode::PerRow1d => self.per_row(a, laplacian_row_transpose),
            AxisMode::Full2d => laplacian_2d_transpose(a, self.bc),
        }
    }

    /// First difference along the key axis (row direction) for both modes.
    pub fn gradient(&self, a: &Array2<f64>, scheme: GradientScheme) -> Array2<f64> {
        self.per_row(a, |s, d, bc| gradient_row(s, d, bc, scheme))
    }

    pub fn gradient_transpose(&self, a: &Array2<f64>, scheme: GradientScheme) -> Array2<f64> {
        self.per_row(a, |s, d, bc| gradient_row_transpose(s, d, bc, scheme))
    }

    /// Zero entries outside the causal support; identity otherwise.
    pub fn mask_in_place(&self, a: &mut Array2<f64>) {
        if !self.causal {
            return;
        }
        for (i, mut row) in a.axis_iter_mut(Axis(0)).enumerate() {
            let n = row.len();
            row.slice_mut(ndarray::s![(i + 1).min(n)..]).fill(0.0);
        }
    }
}

fn laplacian_2d(a: &Array2<f64>, bc: BoundaryCondition) -> Array2<f64> {
    let (m, n) = a.dim();
    Array2::from_shape_fn((m, n), |(i, j)| {
        a[[neighbor(i, -1, m, bc), j]]
            + a[[neighbor(i, 1, m, bc), j]]
            + a[[i, neighbor(j, -1, n, bc)]]
            + a[[i, neighbor(j, 1, n, bc)]]
            - 4.0 * a[[i, j]]
    })
}

fn laplacian_2d_transpose(a: &Array2<f64>, bc: BoundaryCondition) -> Array2<f64> {
    let (m, n) = a.dim();
    let mut out = Array2::zeros((m, n));
    for i in 0..m {
        for j in 0..n {
            let g = a[[i, j]];
            out[[neighbor(i, -1, m, bc), j]] += g;
            out[[neighbor(i, 1, m, bc), j]] += g;
            out[[i, neighbor(j, -1, n, bc)]] += g;
            out[[i, neighbor(j, 1, n, bc)]] += g;
            out[[i, j]] -= 4.0 * g;
        }
    }
    out
}

/// Apply the discrete Laplacian to a square field.
pub fn laplacian_apply(
    values: &Array2<f64>,
    mode: AxisMode,
    bc: BoundaryCondition,
) -> Result<Array2<f64>> {
    let (m, n) = values.dim();
    if m != n || n < 2 {
        return Err(Error::shape("square matrix with T >= 2", format!("{m}x{n}")));
    }
    Ok(Domain::new(bc, mode).laplacian(values))
}

/// Per-mode DFT coefficients plus the periodic Laplacian eigenvalue of each
/// mode (`L e_k = -lambda_k e_k`).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub coefficients: Vec<Complex64>,
    pub mode_eigenvalues: Vec<f64>,
}

/// `lambda_k = 2 - 2 cos(2 pi k / T)` for `k = 0..T`.
pub fn mode_eigenvalues(t: usize) -> Vec<f64> {
    (0..t)
        .map(|k| 2.0 - 2.0 * (2.0 * PI * k as f64 / t as f64).cos())
        .collect()
}

/// Smallest non-zero periodic Laplacian eigenvalue.
pub fn lambda_min(t: usize) -> f64 {
    2.0 - 2.0 * (2.0 * PI / t as f64).cos()
}

/// `exp(sign * 2 pi i m / T)` for `m = 0..T`; indexing with `(j * k) % T`
/// keeps large phase products exact.
fn twiddles(t: usize, sign: f64) -> Vec<Complex64> {
    (0..t)
        .map(|m| {
            let theta = 2.0 * PI * m as f64 / t as f64;
            Complex64::new(theta.cos(), sign * theta.sin())
        })
        .collect()
}

/// Naive O(T^2) forward transform `X_k = sum_j x_j exp(-2 pi i j k / T)`.
pub fn dft_row(row: &[f64]) -> Result<Spectrum> {
    let t = row.len();
    if t < 2 {
        return Err(Error::InvalidInput(format!("dft needs at least 2 samples, got {t}")));
    }
    let w = twiddles(t, -1.0);
    let coefficients = (0..t)
        .map(|k| {
            row.iter()
                .enumerate()
                .map(|(j, &x)| w[(j * k) % t] * x)
                .sum()
        })
        .collect();
    Ok(Spectrum {
        coefficients,
        mode_eigenvalues: mode_eigenvalues(t),
    })
}

/// Inverse transform; returns the complex signal (imaginary part is roundoff
/// for spectra of real inputs).
pub fn idft(coefficients: &[Complex64]) -> Vec<Complex64> {
    let t = coefficients.len();
    let w = twiddles(t, 1.0);
    let scale = 1.0 / t as f64;
    (0..t)
        .map(|j| {
            coefficients
                .iter()
                .enumerate()
                .map(|(k, &c)| c * w[(j * k) % t])
                .sum::<Complex64>()
                * scale
        })
        .collect()
}

/// Real part of the inverse transform.
pub fn idft_real(coefficients: &[Complex64]) -> Vec<f64> {
    idft(coefficients).into_iter().map(|c| c.re).collect()
}

/// Frobenius inner product.
pub fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}
