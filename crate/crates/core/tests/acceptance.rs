//! Acceptance run: one PASS/FAIL line per criterion. Criteria listed in
//! `KNOWN_FAILURES` fail for documented reasons and are reported honestly;
//! the process exits nonzero only if any other criterion fails, or if a
//! known failure stops failing (so the list stays truthful).

mod common;

use std::time::{Duration, Instant};

use pde_attention::bench::{run_bench, scaling_exponent};
use pde_attention::grid::BoundaryCondition;
use pde_attention::metrics::{
    cfl_negative_control, mode_decay_battery, random_simplex, smoothness_battery, verify_conservation,
    verify_multilayer_error, verify_propagation_speed, VerificationReport,
};
use pde_attention::model::{AblationConfig, CellSpec};
use pde_attention::pde::{run_steps, PdeConfig, PdeKind};
use rand::Rng;

/// Criterion 2 asks for the envelope `S(0) (1 - alpha dt lambda_min)^{2n}`,
/// which the battery's own parameter range violates whenever the highest
/// Fourier mode decays more slowly than the lowest.
const KNOWN_FAILURES: [u8; 1] = [2];

const SEED: u64 = 20_240_601;

struct Outcome {
    id: u8,
    title: &'static str,
    pass: bool,
    detail: String,
    /// Extra conditions that must hold even for a known failure.
    characterized: Option<bool>,
}

fn m(r: &VerificationReport, key: &str) -> f64 {
    r.measured.get(key).copied().unwrap_or(f64::NAN)
}

fn c1() -> Outcome {
    let start = Instant::now();
    let r = mode_decay_battery(100, 50, SEED).unwrap();
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 1,
        title: "mode-decay exactness",
        pass: r.pass && secs < 10.0,
        detail: format!("100 fields, max rel error {:.2e}, {secs:.2} s", m(&r, "max_rel_error")),
        characterized: None,
    }
}

fn c2() -> Outcome {
    let start = Instant::now();
    let battery = smoothness_battery(100, 50, SEED).unwrap();
    let control = cfl_negative_control(32, 50, SEED).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let monotone = m(&battery, "smoothness_increase") <= 1e-12 && m(&battery, "consistency_increase") <= 1e-12;
    let spectral_ok = m(&battery, "spectral_envelope_excess") <= 1e-12;
    Outcome {
        id: 2,
        title: "smoothness/consistency bounds + CFL negative control",
        pass: battery.pass && control.pass && secs < 10.0,
        detail: format!(
            "S,C monotone: {monotone}; stated envelope violated on {} of 100 fields (excess {:.2e}); \
             spectral-radius envelope holds: {spectral_ok}; negative control fails as required: {}; {secs:.2} s",
            m(&battery, "failed_fields"),
            m(&battery, "envelope_excess"),
            control.pass
        ),
        characterized: Some(monotone && spectral_ok && control.pass),
    }
}

fn c3() -> Outcome {
    let start = Instant::now();
    let r = verify_propagation_speed(256, 0.1, 1.0, 400).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let (slope, corr) = (m(&r, "slope"), m(&r, "correlation"));
    Outcome {
        id: 3,
        title: "propagation exponent",
        pass: (0.4..=0.6).contains(&slope) && corr >= 0.99 && secs < 5.0,
        detail: format!("slope {slope:.3}, correlation {corr:.4}, {secs:.2} s"),
        characterized: None,
    }
}

fn c4() -> Outcome {
    let start = Instant::now();
    let r = verify_multilayer_error(64, 0.1, 8.0, &[0.5, 0.25, 0.125]).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ratios = [m(&r, "ratio_0"), m(&r, "ratio_1")];
    Outcome {
        id: 4,
        title: "first-order convergence in dt",
        pass: ratios.iter().all(|q| (1.6..=2.4).contains(q)) && secs < 5.0,
        detail: format!("error ratios {:.3}, {:.3}; {secs:.2} s", ratios[0], ratios[1]),
        characterized: None,
    }
}

fn c5() -> Outcome {
    let start = Instant::now();
    let ops = common::op_gradient_checks();
    let worst_op = ops
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let models = common::one_layer_model_gradient_errors();
    let worst_model = models.iter().map(|(_, e)| *e).fold(0.0, f64::max);
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        id: 5,
        title: "gradient correctness",
        pass: worst_op.max_rel_error <= 1e-5 && worst_model <= 1e-4 && secs < 60.0,
        detail: format!(
            "{} op checks, worst {:.2e} ({}); one-layer models worst {worst_model:.2e}; {secs:.2} s",
            ops.len(),
            worst_op.max_rel_error,
            worst_op.name
        ),
        characterized: None,
    }
}

fn c6() -> Outcome {
    let zero = common::zero_step_vs_standard();
    let window = common::full_window_vs_dense();
    let uniform = common::uniform_is_exact_fixed_point();
    Outcome {
        id: 6,
        title: "degenerate equivalences",
        pass: zero <= 1e-12 && window <= 1e-12 && uniform,
        detail: format!("N_t=0 vs standard {zero:.1e}; full window vs dense {window:.1e}; uniform fixed: {uniform}"),
        characterized: None,
    }
}

fn c7() -> Outcome {
    let mut suites_pass = true;
    for seed in 0..5 {
        for kind in [PdeKind::Diffusion, PdeKind::Wave] {
            suites_pass &= verify_conservation(kind, 32, 1000, SEED + seed).unwrap().pass;
        }
    }
    let mut rng = common::rng(SEED);
    let mut min_entry = f64::INFINITY;
    let mut worst_drift = 0.0f64;
    for i in 0..1000 {
        let t = rng.random_range(4..=32usize);
        let alpha_dt = 0.5 - rng.random_range(0.0..0.5);
        let mut cfg = PdeConfig::diffusion(alpha_dt, 1.0, 20);
        if i % 2 == 1 {
            cfg.bc = BoundaryCondition::ZeroFlux;
        }
        let a0 = random_simplex(t, &mut rng);
        let steps = run_steps(&a0, false, &cfg, &cfg.coefficients()).unwrap();
        let budget = 8.0 * t as f64 * f64::EPSILON;
        for (n, f) in steps.fields.iter().enumerate().skip(1) {
            min_entry = min_entry.min(f.iter().copied().fold(f64::INFINITY, f64::min));
            for row in f.rows() {
                worst_drift = worst_drift.max((row.sum() - 1.0).abs() / (n as f64 * budget));
            }
        }
    }
    Outcome {
        id: 7,
        title: "conservation and positivity",
        pass: suites_pass && min_entry >= 0.0 && worst_drift <= 1.0,
        detail: format!(
            "1000-step diffusion/wave suites pass: {suites_pass}; 1000 simplex fields: min entry {min_entry:.2e}, \
             worst drift {worst_drift:.3} of budget"
        ),
        characterized: None,
    }
}

fn c8() -> Outcome {
    let cfg = AblationConfig {
        steps: vec![1, 2, 4, 8],
        ..Default::default()
    };
    let mut lines = Vec::new();
    let mut pass = true;
    let mut slowest = 0.0f64;
    for n_steps in [1usize, 2, 4, 8] {
        let cells: Vec<CellSpec> = cfg.cells().into_iter().filter(|c| c.n_steps == n_steps).collect();
        let results: Vec<_> = cells.iter().map(|&c| cfg.run_cell(c).unwrap()).collect();
        slowest = results.iter().map(|c| c.seconds).fold(slowest, f64::max);
        let ok = if n_steps == 8 {
            results.iter().all(|c| c.spec.unstable && c.diverged)
        } else {
            results.iter().all(|c| c.converged && !c.diverged)
        };
        pass &= ok;
        let reductions: Vec<String> = results.iter().map(|c| format!("{:.3}", c.loss_reduction)).collect();
        lines.push(if n_steps == 8 {
            format!(
                "N_t=8 (alpha={}, guard off) diverged {}/3",
                cfg.unstable_alpha,
                results.iter().filter(|c| c.diverged).count()
            )
        } else {
            format!("N_t={n_steps} reductions [{}]", reductions.join(", "))
        });
    }
    pass &= slowest < 15.0 * 60.0;
    Outcome {
        id: 8,
        title: "ablation shape on long-range recall",
        pass,
        detail: format!("{}; slowest cell {slowest:.0} s", lines.join("; ")),
        characterized: None,
    }
}

fn c9() -> Outcome {
    let sizes = [128, 256, 512, 1024, 2048];
    let points = run_bench(&[PdeKind::Diffusion], &sizes, 5, Duration::from_millis(50)).unwrap();
    let (slope, r) = scaling_exponent(&points).unwrap();
    let times: Vec<String> = points.iter().map(|p| format!("{:.0}", p.ns_per_step / 1e3)).collect();
    Outcome {
        id: 9,
        title: "dense step cost scales as T^2",
        pass: (1.8..=2.2).contains(&slope),
        detail: format!("slope {slope:.3} (r = {r:.4}); us/step at T=128..2048: [{}]", times.join(", ")),
        characterized: None,
    }
}

fn main() {
    // libtest passes flags such as --nocapture or a name filter; none apply here
    let criteria: [fn() -> Outcome; 9] = [c1, c2, c3, c4, c5, c6, c7, c8, c9];
    let mut unexpected = Vec::new();
    for run in criteria {
        let o = run();
        let known = KNOWN_FAILURES.contains(&o.id);
        let tag = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {}: {tag}  {}  [{}]", o.id, o.title, o.detail);
        if o.pass == known || o.characterized == Some(false) {
            unexpected.push(o.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected acceptance outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
