//! Multi-head attention whose softmax weights are evolved in pseudo-time
//! before being applied to the values, with exact reverse-mode gradients.

use ndarray::{s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{AxisMode, BoundaryCondition};
use crate::hybrid::SparsePattern;
use crate::pde::{run_steps, step_adjoint, AttentionField, Coefficients, PdeConfig, PdeKind, Steps};

/// Which score entries may receive attention.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMask {
    #[default]
    Dense,
    /// Query `i` sees keys `0..=i`; evolution runs on that prefix.
    Causal,
    Sparse(SparsePattern),
}

impl AttentionMask {
    fn allows(&self, i: usize, j: usize) -> bool {
        match self {
            AttentionMask::Dense => true,
            AttentionMask::Causal => j <= i,
            AttentionMask::Sparse(p) => p.contains(i, j),
        }
    }

    fn is_causal(&self) -> bool {
        matches!(self, AttentionMask::Causal)
    }
}

/// Row softmax with max subtraction. `-inf` entries become exact zeros.
pub fn softmax_rows(scores: &Array2<f64>) -> Array2<f64> {
    let mut out = scores.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - m).exp());
        let z = row.sum();
        row.mapv_inplace(|x| x / z);
    }
    out
}

/// Pull a gradient back through a row softmax given its output `p`.
pub fn softmax_rows_backward(p: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(p.raw_dim());
    for ((pr, gr), mut or) in p
        .axis_iter(Axis(0))
        .zip(grad.axis_iter(Axis(0)))
        .zip(out.axis_iter_mut(Axis(0)))
    {
        let dot: f64 = pr.iter().zip(gr.iter()).map(|(p, g)| p * g).sum();
        for ((o, &p), &g) in or.iter_mut().zip(pr.iter()).zip(gr.iter()) {
            *o = p * (g - dot);
        }
    }
    out
}

fn scaled_scores(q: ArrayView2<f64>, k: ArrayView2<f64>, mask: &AttentionMask) -> Array2<f64> {
    let scale = 1.0 / (q.ncols() as f64).sqrt();
    let mut scores = q.dot(&k.t()) * scale;
    for ((i, j), v) in scores.indexed_iter_mut() {
        if !mask.allows(i, j) {
            *v = f64::NEG_INFINITY;
        }
    }
    scores
}

fn check_qk(q: ArrayView2<f64>, k: ArrayView2<f64>) -> Result<()> {
    if q.dim() != k.dim() || q.ncols() == 0 {
        return Err(Error::shape(format!("{:?}", q.dim()), format!("{:?}", k.dim())));
    }
    if q.nrows() < 2 {
        return Err(Error::InvalidInput("need at least 2 tokens".into()));
    }
    Ok(())
}

/// `A(0) = softmax(q k^T / sqrt(d))` on a periodic field.
pub fn attention_init(q: &Array2<f64>, k: &Array2<f64>) -> Result<AttentionField> {
    attention_init_masked(q.view(), k.view(), &AttentionMask::Dense, BoundaryCondition::Periodic)
}

pub fn attention_init_masked(
    q: ArrayView2<f64>,
    k: ArrayView2<f64>,
    mask: &AttentionMask,
    bc: BoundaryCondition,
) -> Result<AttentionField> {
    check_qk(q, k)?;
    let a = softmax_rows(&scaled_scores(q, k, mask));
    if mask.is_causal() {
        AttentionField::causal(a)
    } else {
        AttentionField::new(a, bc)
    }
}

/// Softmax field of random standard-normal queries and keys of width `d`.
pub fn random_attention_field<R: Rng>(t: usize, d: usize, rng: &mut R) -> Result<AttentionField> {
    if d == 0 {
        return Err(Error::InvalidInput("head width must be positive".into()));
    }
    let mut draw = || Array2::from_shape_fn((t, d), |_| rng.sample::<f64, _>(StandardNormal));
    let q = draw();
    let k = draw();
    attention_init(&q, &k)
}

/// Reference single-head attention `softmax(q k^T / sqrt(d)) v`, written
/// without the field machinery.
pub fn standard_attention(q: &Array2<f64>, k: &Array2<f64>, v: &Array2<f64>) -> Array2<f64> {
    let d = q.ncols() as f64;
    let scores = q.dot(&k.t()) / d.sqrt();
    let mut w = Array2::zeros(scores.raw_dim());
    for (i, row) in scores.axis_iter(Axis(0)).enumerate() {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        for (j, x) in e.into_iter().enumerate() {
            w[[i, j]] = x / z;
        }
    }
    w.dot(v)
}

/// Projections for one multi-head layer plus per-head PDE coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionWeights {
    pub n_heads: usize,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub coeffs: Vec<Coefficients>,
}

impl ProjectionWeights {
    /// Uniform fan-in initialisation; coefficients copied from `cfg`.
    pub fn init<R: Rng>(d: usize, n_heads: usize, cfg: &PdeConfig, rng: &mut R) -> Result<Self> {
        if n_heads == 0 || !d.is_multiple_of(n_heads) {
            return Err(Error::InvalidConfig(format!(
                "head count {n_heads} must divide model width {d}"
            )));
        }
        let bound = 1.0 / (d as f64).sqrt();
        let mut mat = || Array2::from_shape_fn((d, d), |_| rng.random_range(-bound..bound));
        Ok(ProjectionWeights {
            n_heads,
            w_q: mat(),
            w_k: mat(),
            w_v: mat(),
            w_o: mat(),
            coeffs: vec![cfg.coefficients(); n_heads],
        })
    }

    pub fn d_model(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn d_head(&self) -> usize {
        self.d_model() / self.n_heads
    }

    fn validate(&self, x: &Array2<f64>) -> Result<()> {
        let d = self.d_model();
        if self.n_heads == 0 || !d.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "head count {} must divide model width {d}",
                self.n_heads
            )));
        }
        for (name, w) in [("w_q", &self.w_q), ("w_k", &self.w_k), ("w_v", &self.w_v), ("w_o", &self.w_o)] {
            if w.dim() != (d, d) {
                return Err(Error::shape(format!("{name} {d}x{d}"), format!("{:?}", w.dim())));
            }
        }
        if self.coeffs.len() != self.n_heads {
            return Err(Error::shape(
                format!("{} head coefficients", self.n_heads),
                self.coeffs.len().to_string(),
            ));
        }
        if x.ncols() != d {
            return Err(Error::shape(format!("input width {d}"), x.ncols().to_string()));
        }
        Ok(())
    }

    /// Project learnable coefficients back into the stable region for `cfg`.
    pub fn clamp_coefficients(&mut self, cfg: &PdeConfig) {
        for k in &mut self.coeffs {
            clamp_to_cfl(k, cfg);
        }
    }
}

/// CFL clamp: `alpha` into `[0, 1/(2 dims dt)]`, `c` into
/// `[0, 1/(sqrt(dims) dt)]`, `|beta| <= 1/dt`.
pub fn clamp_to_cfl(k: &mut Coefficients, cfg: &PdeConfig) {
    let dims = match cfg.axis {
        AxisMode::PerRow1d => 1.0,
        AxisMode::Full2d => 2.0,
    };
    k.alpha = k.alpha.clamp(0.0, 1.0 / (2.0 * dims * cfg.dt));
    k.c = k.c.clamp(0.0, 1.0 / (dims.sqrt() * cfg.dt));
    k.beta = k.beta.clamp(-1.0 / cfg.dt, 1.0 / cfg.dt);
}

#[derive(Debug, Clone)]
pub struct HeadTape {
    /// Softmax initialisation `A(0)`.
    pub a0: Array2<f64>,
    pub steps: Steps,
}

impl HeadTape {
    pub fn final_field(&self) -> &Array2<f64> {
        self.steps.fields.last().expect("steps hold A(0)")
    }
}

/// Everything the backward pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct AttentionTape {
    pub x: Array2<f64>,
    pub weights: ProjectionWeights,
    pub cfg: PdeConfig,
    pub mask: AttentionMask,
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub heads: Vec<HeadTape>,
    pub concat: Array2<f64>,
}

impl AttentionTape {
    /// Recompute the layer output from the recorded intermediates.
    pub fn replay(&self) -> Array2<f64> {
        let dh = self.weights.d_head();
        let mut concat = Array2::zeros(self.q.raw_dim());
        for (h, head) in self.heads.iter().enumerate() {
            let cols = s![.., h * dh..(h + 1) * dh];
            concat
                .slice_mut(cols)
                .assign(&head.final_field().dot(&self.v.slice(cols)));
        }
        concat.dot(&self.weights.w_o)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionGrads {
    pub x: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub w_o: Array2<f64>,
    pub coeffs: Vec<Coefficients>,
}

/// Per head: `A(0)` from softmax, `n_steps` PDE steps, `A(N) V_h`; heads are
/// concatenated and projected by `w_o`.
pub fn pde_attention_forward(
    x: &Array2<f64>,
    weights: &ProjectionWeights,
    cfg: &PdeConfig,
    mask: &AttentionMask,
) -> Result<(Array2<f64>, AttentionTape)> {
    weights.validate(x)?;
    if x.nrows() < 2 {
        return Err(Error::InvalidInput("need at least 2 tokens".into()));
    }
    let dh = weights.d_head();
    let q = x.dot(&weights.w_q);
    let k = x.dot(&weights.w_k);
    let v = x.dot(&weights.w_v);
    let causal = mask.is_causal();
    let mut concat = Array2::zeros(q.raw_dim());
    let mut heads = Vec::with_capacity(weights.n_heads);
    for h in 0..weights.n_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let a0 = softmax_rows(&scaled_scores(q.slice(cols), k.slice(cols), mask));
        let steps = run_steps(&a0, causal, cfg, &weights.coeffs[h])?;
        concat
            .slice_mut(cols)
            .assign(&steps.fields.last().expect("steps hold A(0)").dot(&v.slice(cols)));
        heads.push(HeadTape { a0, steps });
    }
    let y = concat.dot(&weights.w_o);
    let tape = AttentionTape {
        x: x.clone(),
        weights: weights.clone(),
        cfg: cfg.clone(),
        mask: mask.clone(),
        q,
        k,
        v,
        heads,
        concat,
    };
    Ok((y, tape))
}

/// Exact reverse pass through projection, value product, every PDE step and
/// the softmax.
pub fn pde_attention_backward(tape: &AttentionTape, dy: &Array2<f64>) -> Result<AttentionGrads> {
    if dy.dim() != tape.concat.dim() {
        return Err(Error::shape(
            format!("{:?}", tape.concat.dim()),
            format!("{:?}", dy.dim()),
        ));
    }
    let w = &tape.weights;
    let dh = w.d_head();
    let scale = 1.0 / (dh as f64).sqrt();
    let causal = tape.mask.is_causal();
    let grad_w_o = tape.concat.t().dot(dy);
    let d_concat = dy.dot(&w.w_o.t());
    let mut dq = Array2::zeros(tape.q.raw_dim());
    let mut dk = Array2::zeros(tape.k.raw_dim());
    let mut dv = Array2::zeros(tape.v.raw_dim());
    let mut coeffs = vec![Coefficients::default(); w.n_heads];

    for (h, head) in tape.heads.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let d_head = d_concat.slice(cols);
        let a_final = head.final_field();
        dv.slice_mut(cols).assign(&a_final.t().dot(&d_head));
        let mut g = d_head.dot(&tape.v.slice(cols).t());
        let mut gv: Option<Array2<f64>> = None;
        for n in (0..tape.cfg.n_steps).rev() {
            let v_in = head.steps.velocities.as_ref().map(|vs| &vs[n]);
            let adj = step_adjoint(
                &tape.cfg,
                causal,
                &w.coeffs[h],
                &head.steps.fields[n],
                v_in,
                &g,
                gv.as_ref(),
            )?;
            g = adj.grad_a;
            gv = adj.grad_v;
            coeffs[h] += adj.grad_coeffs;
        }
        let d_scores = softmax_rows_backward(&head.a0, &g) * scale;
        dq.slice_mut(cols).assign(&d_scores.dot(&tape.k.slice(cols)));
        dk.slice_mut(cols).assign(&d_scores.t().dot(&tape.q.slice(cols)));
    }
    if tape.cfg.kind != PdeKind::Wave {
        for c in &mut coeffs {
            c.c = 0.0;
        }
    }
    let x = dq.dot(&w.w_q.t()) + dk.dot(&w.w_k.t()) + dv.dot(&w.w_v.t());
    Ok(AttentionGrads {
        x,
        w_q: tape.x.t().dot(&dq),
        w_k: tape.x.t().dot(&dk),
        w_v: tape.x.t().dot(&dv),
        w_o: grad_w_o,
        coeffs,
    })
}

/// Outcome of comparing an analytic gradient with central differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub n_checked: usize,
}

/// Compare `analytic` against `(f(p + eps e_i) - f(p - eps e_i)) / 2 eps` for
/// every coordinate. Relative error uses `max(|a|, |n|, 1e-12)` as the
/// denominator.
pub fn gradient_check<F>(f: F, params: &[f64], analytic: &[f64], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(1e-8..=1e-4).contains(&eps) {
        return Err(Error::InvalidInput(format!("eps must lie in [1e-8, 1e-4], got {eps}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::shape(params.len().to_string(), analytic.len().to_string()));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        n_checked: params.len(),
    };
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + eps;
        let fp = f(&p)?;
        p[i] = orig - eps;
        let fm = f(&p)?;
        p[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite function value at coordinate {i}"
            )));
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-12);
        if i == 0 || rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}
