//! Shared checks for the gradient, equivalence and acceptance test targets.
#![allow(dead_code)]

use ndarray::{s, Array2};
use pde_attention::attention::{
    attention_init, gradient_check, pde_attention_backward, pde_attention_forward, softmax_rows,
    softmax_rows_backward, standard_attention, AttentionMask, ProjectionWeights,
};
use pde_attention::grid::{AxisMode, BoundaryCondition};
use pde_attention::hybrid::{sparse_init, SparsePattern};
use pde_attention::model::{Model, ModelConfig, Sample, Task};
use pde_attention::pde::{
    diffusion_step, run_steps, step_adjoint, wave_step, AttentionField, Coefficients, PdeConfig, PdeKind,
    WaveState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPS: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_mat(r: usize, c: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(lo..hi))
}

fn dot(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn flat(a: &Array2<f64>) -> Vec<f64> {
    a.iter().copied().collect()
}

fn unflat(p: &[f64], like: &Array2<f64>) -> Array2<f64> {
    Array2::from_shape_vec(like.raw_dim(), p.to_vec()).unwrap()
}

/// Positive rows summing to one; with `causal`, supported on the prefix.
fn stochastic(t: usize, causal: bool, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut a = rand_mat(t, t, 0.05, 1.0, rng);
    for i in 0..t {
        if causal {
            a.slice_mut(s![i, i + 1..]).fill(0.0);
        }
        let z = a.row(i).sum();
        a.row_mut(i).mapv_inplace(|v| v / z);
    }
    a
}

#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: String,
    pub max_rel_error: f64,
}

fn check(name: String, f: impl Fn(&[f64]) -> f64, p: &[f64], analytic: &[f64]) -> OpCheck {
    let r = gradient_check(|x| Ok(f(x)), p, analytic, EPS).unwrap();
    OpCheck {
        name,
        max_rel_error: r.max_rel_error,
    }
}

struct StepCase {
    label: &'static str,
    bc: BoundaryCondition,
    axis: AxisMode,
    causal: bool,
    renorm: bool,
}

const STEP_CASES: [StepCase; 5] = [
    StepCase { label: "periodic", bc: BoundaryCondition::Periodic, axis: AxisMode::PerRow1d, causal: false, renorm: false },
    StepCase { label: "zero_flux", bc: BoundaryCondition::ZeroFlux, axis: AxisMode::PerRow1d, causal: false, renorm: false },
    StepCase { label: "causal", bc: BoundaryCondition::ZeroFlux, axis: AxisMode::PerRow1d, causal: true, renorm: false },
    StepCase { label: "full_2d", bc: BoundaryCondition::Periodic, axis: AxisMode::Full2d, causal: false, renorm: false },
    StepCase { label: "renormalized", bc: BoundaryCondition::Periodic, axis: AxisMode::PerRow1d, causal: false, renorm: true },
];

fn step_once(a: &Array2<f64>, causal: bool, cfg: &PdeConfig, k: &Coefficients) -> Array2<f64> {
    run_steps(a, causal, cfg, k).unwrap().fields.pop().unwrap()
}

/// Finite-difference checks of every differentiable operation: the row
/// softmax, one step of each kernel (field input, wave velocity input and
/// each coefficient) under several boundary setups, the value product and
/// the assembled multi-head layer.
pub fn op_gradient_checks() -> Vec<OpCheck> {
    let mut out = Vec::new();
    let mut r = rng(21);
    let t = 6;

    let scores = rand_mat(t, t, -2.0, 2.0, &mut r);
    let w = rand_mat(t, t, -1.0, 1.0, &mut r);
    let p = softmax_rows(&scores);
    out.push(check(
        "softmax_init".into(),
        |x| dot(&w, &softmax_rows(&unflat(x, &scores))),
        &flat(&scores),
        &flat(&softmax_rows_backward(&p, &w)),
    ));

    for kind in PdeKind::ALL {
        for case in &STEP_CASES {
            let mut cfg = PdeConfig::reference(kind, 1);
            cfg.bc = case.bc;
            cfg.axis = case.axis;
            cfg.renormalize_rows = case.renorm;
            let k = cfg.coefficients();
            let a = stochastic(t, case.causal, &mut r);
            let g = rand_mat(t, t, -1.0, 1.0, &mut r);
            let v0 = (kind == PdeKind::Wave).then(|| Array2::zeros((t, t)));
            let adj = step_adjoint(&cfg, case.causal, &k, &a, v0.as_ref(), &g, None).unwrap();
            let label = format!("{}_step/{}", kind.name(), case.label);
            out.push(check(
                format!("{label}/field"),
                |x| dot(&g, &step_once(&unflat(x, &a), case.causal, &cfg, &k)),
                &flat(&a),
                &flat(&adj.grad_a),
            ));
            let coeff_names: &[&str] = match kind {
                PdeKind::Diffusion => &["alpha"],
                PdeKind::Wave => &["c"],
                PdeKind::ReactionDiffusion | PdeKind::AdvectionDiffusion => &["alpha", "beta"],
            };
            for &name in coeff_names {
                let with = |x: f64| {
                    let mut kk = k;
                    match name {
                        "alpha" => kk.alpha = x,
                        "beta" => kk.beta = x,
                        _ => kk.c = x,
                    }
                    kk
                };
                let (base, grad) = match name {
                    "alpha" => (k.alpha, adj.grad_coeffs.alpha),
                    "beta" => (k.beta, adj.grad_coeffs.beta),
                    _ => (k.c, adj.grad_coeffs.c),
                };
                out.push(check(
                    format!("{label}/{name}"),
                    |x| dot(&g, &step_once(&a, case.causal, &cfg, &with(x[0]))),
                    &[base],
                    &[grad],
                ));
            }
        }
    }

    // wave with a nonzero incoming velocity, both outputs weighted
    let cfg = PdeConfig::reference(PdeKind::Wave, 1);
    let s = cfg.settings();
    let a = stochastic(t, false, &mut r);
    let v = rand_mat(t, t, -0.1, 0.1, &mut r);
    let (ga, gv) = (rand_mat(t, t, -1.0, 1.0, &mut r), rand_mat(t, t, -1.0, 1.0, &mut r));
    let adj = step_adjoint(&cfg, false, &cfg.coefficients(), &a, Some(&v), &ga, Some(&gv)).unwrap();
    let field = |a: Array2<f64>| AttentionField::new(a, cfg.bc).unwrap();
    let wave_loss = |a: &Array2<f64>, v: &Array2<f64>| {
        let out = wave_step(&WaveState { a: field(a.clone()), v: v.clone() }, cfg.c, cfg.dt, &s).unwrap();
        dot(&ga, &out.a.values) + dot(&gv, &out.v)
    };
    out.push(check(
        "wave_step/moving/field".into(),
        |x| wave_loss(&unflat(x, &a), &v),
        &flat(&a),
        &flat(&adj.grad_a),
    ));
    out.push(check(
        "wave_step/moving/velocity".into(),
        |x| wave_loss(&a, &unflat(x, &v)),
        &flat(&v),
        &flat(adj.grad_v.as_ref().unwrap()),
    ));

    let a = stochastic(t, false, &mut r);
    let vals = rand_mat(t, 3, -1.0, 1.0, &mut r);
    let g = rand_mat(t, 3, -1.0, 1.0, &mut r);
    out.push(check(
        "value_product".into(),
        |x| dot(&g, &a.dot(&unflat(x, &vals))),
        &flat(&vals),
        &flat(&a.t().dot(&g)),
    ));

    for (label, mask, kind) in [
        ("dense_diffusion", AttentionMask::Dense, PdeKind::Diffusion),
        ("causal_diffusion", AttentionMask::Causal, PdeKind::Diffusion),
        ("dense_wave", AttentionMask::Dense, PdeKind::Wave),
    ] {
        let mut cfg = PdeConfig::reference(kind, 2);
        cfg.renormalize_rows = true;
        let weights = ProjectionWeights::init(4, 2, &cfg, &mut r).unwrap();
        let x = rand_mat(5, 4, -1.0, 1.0, &mut r);
        let g = rand_mat(5, 4, -1.0, 1.0, &mut r);
        let (_, tape) = pde_attention_forward(&x, &weights, &cfg, &mask).unwrap();
        let grads = pde_attention_backward(&tape, &g).unwrap();
        let loss = |x: &Array2<f64>, w: &ProjectionWeights| dot(&g, &pde_attention_forward(x, w, &cfg, &mask).unwrap().0);
        out.push(check(
            format!("layer/{label}/input"),
            |p| loss(&unflat(p, &x), &weights),
            &flat(&x),
            &flat(&grads.x),
        ));
        for (name, mat, grad) in [
            ("w_q", &weights.w_q, &grads.w_q),
            ("w_k", &weights.w_k, &grads.w_k),
            ("w_v", &weights.w_v, &grads.w_v),
            ("w_o", &weights.w_o, &grads.w_o),
        ] {
            out.push(check(
                format!("layer/{label}/{name}"),
                |p| {
                    let mut w = weights.clone();
                    let m = unflat(p, mat);
                    match name {
                        "w_q" => w.w_q = m,
                        "w_k" => w.w_k = m,
                        "w_v" => w.w_v = m,
                        _ => w.w_o = m,
                    }
                    loss(&x, &w)
                },
                &flat(mat),
                &flat(grad),
            ));
        }
        let learnable: Vec<f64> = weights
            .coeffs
            .iter()
            .map(|c| if kind == PdeKind::Wave { c.c } else { c.alpha })
            .collect();
        let analytic: Vec<f64> = grads
            .coeffs
            .iter()
            .map(|c| if kind == PdeKind::Wave { c.c } else { c.alpha })
            .collect();
        out.push(check(
            format!("layer/{label}/learnable_coefficient"),
            |p| {
                let mut w = weights.clone();
                for (c, &v) in w.coeffs.iter_mut().zip(p) {
                    if kind == PdeKind::Wave {
                        c.c = v;
                    } else {
                        c.alpha = v;
                    }
                }
                loss(&x, &w)
            },
            &learnable,
            &analytic,
        ));
    }
    out
}

/// Worst relative gradient error of a one-layer model on a small
/// classification sample, per PDE kind.
pub fn one_layer_model_gradient_errors() -> Vec<(PdeKind, f64)> {
    let sample = Sample {
        tokens: vec![3, 1, 1, 0, 4, 2],
        targets: vec![None; 6],
        label: Some(2),
    };
    PdeKind::ALL
        .into_iter()
        .enumerate()
        .map(|(i, kind)| {
            let mut pde = PdeConfig::reference(kind, 2);
            pde.renormalize_rows = true;
            pde.alpha = pde.alpha.max(0.05);
            pde.c = pde.c.max(0.05);
            let cfg = ModelConfig {
                n_layers: 1,
                n_heads: 2,
                d_model: 4,
                d_hidden: 6,
                vocab_size: 5,
                max_seq_len: 6,
                n_classes: 3,
                task: Task::Classification,
                pde,
                ..Default::default()
            };
            let model = Model::new(cfg, &mut rng(100 + i as u64)).unwrap();
            let (_, grads) = model.loss_and_grad(&sample).unwrap();
            let f = |p: &[f64]| {
                let mut m = model.clone();
                m.params.assign(p).unwrap();
                m.loss(&sample)
            };
            let r = gradient_check(f, &model.params.flatten(), &grads.flatten(), EPS).unwrap();
            (kind, r.max_rel_error)
        })
        .collect()
}

/// Largest deviation between zero-step PDE attention and an unrolled
/// per-head softmax attention.
pub fn zero_step_vs_standard() -> f64 {
    let mut r = rng(31);
    let cfg = PdeConfig::diffusion(0.1, 1.0, 0);
    let weights = ProjectionWeights::init(6, 3, &cfg, &mut r).unwrap();
    let x = rand_mat(7, 6, -1.0, 1.0, &mut r);
    let (y, _) = pde_attention_forward(&x, &weights, &cfg, &AttentionMask::Dense).unwrap();
    let (q, k, v) = (x.dot(&weights.w_q), x.dot(&weights.w_k), x.dot(&weights.w_v));
    let mut concat = Array2::zeros((7, 6));
    for h in 0..3 {
        let cols = s![.., 2 * h..2 * h + 2];
        let head = standard_attention(
            &q.slice(cols).to_owned(),
            &k.slice(cols).to_owned(),
            &v.slice(cols).to_owned(),
        );
        concat.slice_mut(cols).assign(&head);
    }
    let want = concat.dot(&weights.w_o);
    (&y - &want).iter().fold(0.0, |m, d| m.max(d.abs()))
}

/// Largest deviation between a window covering every key and the dense
/// softmax field.
pub fn full_window_vs_dense() -> f64 {
    let mut r = rng(32);
    let t = 9;
    let q = rand_mat(t, 3, -1.0, 1.0, &mut r);
    let k = rand_mat(t, 3, -1.0, 1.0, &mut r);
    let sparse = sparse_init(&q, &k, &SparsePattern::new(t - 1, [0]), BoundaryCondition::Periodic).unwrap();
    let dense = attention_init(&q, &k).unwrap();
    (&sparse.values - &dense.values).iter().fold(0.0, |m, d| m.max(d.abs()))
}

/// True if one diffusion step leaves a uniform field bit-identical, for
/// both boundary conditions and both stencils.
pub fn uniform_is_exact_fixed_point() -> bool {
    [BoundaryCondition::Periodic, BoundaryCondition::ZeroFlux]
        .into_iter()
        .flat_map(|bc| [(bc, AxisMode::PerRow1d), (bc, AxisMode::Full2d)])
        .all(|(bc, axis)| {
            let u = AttentionField::uniform(10, bc).unwrap();
            let mut cfg = PdeConfig::diffusion(0.2, 1.0, 1);
            cfg.axis = axis;
            let out = diffusion_step(&u, 0.2, 1.0, &cfg.settings()).unwrap();
            out.values == u.values
        })
}
