use ndarray::Array2;
use pde_attention::grid::{lambda_min, BoundaryCondition};
use pde_attention::hybrid::SparsePattern;
use pde_attention::metrics::*;
use pde_attention::pde::{evolve, AttentionField, PdeConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn every_default_suite_passes() {
    for name in SUITE_NAMES {
        let r = run_suite(name, 3).unwrap();
        assert!(r.pass, "{}", r.table());
    }
}

#[test]
fn unknown_suite_is_a_config_error() {
    assert!(run_suite("nope", 0).is_err());
}

#[test]
fn report_pass_tracks_every_check() {
    let mut r = VerificationReport::new("x");
    r.record("info", f64::NAN);
    assert!(r.pass);
    r.check("a", 1.05, 1.0, 0.1);
    assert!(r.pass);
    r.check("b", 2.0, 1.0, 0.5);
    assert!(!r.pass);
    r.check("b", 1.2, 1.0, 0.5);
    assert!(r.pass);
    r.check("c", f64::NAN, 0.0, 1.0);
    assert!(!r.pass);
}

#[test]
fn report_serializes_with_stable_keys() {
    let r = run_suite("multilayer_error", 0).unwrap();
    let json = r.to_json().unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    for key in ["name", "pass", "measured", "expected", "tolerance", "notes"] {
        assert!(v.get(key).is_some(), "{key} missing");
    }
    assert_eq!(json, run_suite("multilayer_error", 0).unwrap().to_json().unwrap());
}

#[test]
fn propagation_exponent_near_one_half() {
    let r = verify_propagation_speed(256, 0.1, 1.0, 400).unwrap();
    assert!(r.pass, "{}", r.table());
}

#[test]
fn propagation_without_steps_reports_insufficient_data() {
    let r = verify_propagation_speed(64, 0.1, 1.0, 0).unwrap();
    assert!(!r.pass);
    assert!(r.notes.iter().any(|n| n.contains("need at least 3")));
}

#[test]
fn propagation_exponent_does_not_depend_on_alpha() {
    let a = verify_propagation_speed(256, 0.1, 1.0, 400).unwrap();
    let b = verify_propagation_speed(256, 0.2, 1.0, 400).unwrap();
    assert!(b.pass, "{}", b.table());
    assert!(b.measured["final_range"] > a.measured["final_range"]);
    assert!((a.measured["slope"] - b.measured["slope"]).abs() < 0.05);
}

#[test]
fn propagation_rejects_unstable_step() {
    assert!(verify_propagation_speed(64, 0.1, 6.0, 10).is_err());
}

#[test]
fn smoothness_of_constant_field_stays_zero() {
    let a0 = Array2::from_elem((8, 8), 0.125);
    let r = verify_smoothness_decay(&a0, &PdeConfig::diffusion(0.1, 1.0, 20)).unwrap();
    assert!(r.pass);
    assert_eq!(r.measured["smoothness_final"], 0.0);
}

#[test]
fn smoothness_spec_example_passes_and_control_fails() {
    let a0 = random_simplex(32, &mut ChaCha8Rng::seed_from_u64(11));
    let r = verify_smoothness_decay(&a0, &PdeConfig::diffusion(0.1, 1.0, 50)).unwrap();
    assert!(r.pass, "{}", r.table());

    let mut bad = PdeConfig::diffusion(0.1, 6.0, 50);
    bad.stability_guard = false;
    let r = verify_smoothness_decay(&a0, &bad).unwrap();
    assert!(!r.pass);
    assert!(r.measured["smoothness_increase"] > 0.0);
}

#[test]
fn smoothness_requires_guard_for_unstable_step() {
    let a0 = random_simplex(8, &mut ChaCha8Rng::seed_from_u64(0));
    assert!(verify_smoothness_decay(&a0, &PdeConfig::diffusion(0.1, 6.0, 5)).is_err());
}

#[test]
fn multilayer_error_is_first_order() {
    let r = verify_multilayer_error(64, 0.1, 8.0, &[0.5, 0.25, 0.125]).unwrap();
    assert!(r.pass, "{}", r.table());
}

#[test]
fn multilayer_error_small_at_fine_step() {
    let r = verify_multilayer_error(64, 0.1, 8.0, &[0.01]).unwrap();
    assert!(r.measured["error_dt_0.01"] < 1e-3);
}

#[test]
fn multilayer_error_vanishes_without_diffusion() {
    let r = verify_multilayer_error(16, 0.0, 4.0, &[0.5, 0.25]).unwrap();
    assert!(r.pass);
    assert!(r.measured["max_error"] <= 1e-12);
}

#[test]
fn multilayer_error_rejects_non_dividing_step() {
    assert!(verify_multilayer_error(16, 0.1, 1.0, &[0.3]).is_err());
}

/// The heat-kernel oracle itself: constant rows are fixed and mass is kept.
#[test]
fn heat_kernel_solution_conserves_and_fixes_constants() {
    let a0 = random_simplex(12, &mut ChaCha8Rng::seed_from_u64(5));
    let out = heat_kernel_solution(&a0, 0.3, 2.0).unwrap();
    for (r0, r1) in a0.rows().into_iter().zip(out.rows()) {
        assert!((r0.sum() - r1.sum()).abs() < 1e-12);
    }
    let c = Array2::from_elem((6, 6), 0.5);
    let out = heat_kernel_solution(&c, 0.3, 5.0).unwrap();
    assert!(out.iter().all(|x| (x - 0.5).abs() < 1e-14));
}

#[test]
fn hybrid_bound_dense_pattern_is_exact() {
    let z = Array2::zeros((16, 4));
    let cfg = PdeConfig::diffusion(0.1, 1.0, 10);
    let r = verify_hybrid_bound(&z, &z, &SparsePattern::new(15, []), &cfg).unwrap();
    assert!(r.pass, "{}", r.table());
    assert_eq!(r.measured["final_error"], 0.0);
}

#[test]
fn hybrid_bound_not_asserted_for_general_targets() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let q = random_simplex(16, &mut rng);
    let k = random_simplex(16, &mut rng);
    let cfg = PdeConfig::diffusion(0.1, 1.0, 10);
    let r = verify_hybrid_bound(&q, &k, &SparsePattern::new(2, [0]), &cfg).unwrap();
    assert!(r.expected.is_empty());
    assert!(!r.notes.is_empty());
}

#[test]
fn conservation_holds_for_both_conservative_kinds() {
    for kind in ["diffusion", "wave"] {
        let r = verify_conservation(kind.parse().unwrap(), 16, 1000, 2).unwrap();
        assert!(r.pass, "{}", r.table());
    }
    assert!(verify_conservation("reaction_diffusion".parse().unwrap(), 16, 10, 0).is_err());
}

/// One diffusion step never shrinks the effective range of a one-hot field.
#[test]
fn range_monotone_from_one_hot_brute_force() {
    for t in 2..=16 {
        let a0 = AttentionField::one_hot(t, BoundaryCondition::Periodic).unwrap();
        let tr = evolve(&a0, &PdeConfig::diffusion(0.1, 1.0, 20)).unwrap();
        let r: Vec<f64> = tr.step_metrics.iter().map(|m| m.range).collect();
        for w in r.windows(2) {
            assert!(w[1] >= w[0], "T={t}: {r:?}");
        }
    }
}

/// Largest eigenvalue of the periodic 1-D Laplacian.
fn lambda_max(t: usize) -> f64 {
    (0..t)
        .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / t as f64).cos())
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// S and C never increase under stable diffusion. The lambda_min envelope
    /// is only guaranteed while the slowest mode is the lowest one, i.e.
    /// alpha dt (lambda_min + lambda_max) <= 2.
    #[test]
    fn smoothness_monotone_and_envelope_where_valid(
        t in 4usize..=64,
        ad in 0.001f64..=0.5,
        seed in any::<u64>(),
    ) {
        let a0 = random_simplex(t, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = verify_smoothness_decay(&a0, &PdeConfig::diffusion(ad, 1.0, 30)).unwrap();
        prop_assert_eq!(r.within("smoothness_increase"), Some(true));
        prop_assert_eq!(r.within("consistency_increase"), Some(true));
        prop_assert!(r.measured["spectral_envelope_excess"] <= 1e-12);
        if ad * (lambda_min(t) + lambda_max(t)) <= 2.0 {
            prop_assert!(r.pass, "{}", r.table());
        }
    }

    #[test]
    fn mode_decay_exact(t in 4usize..=24, ad in 0.001f64..=0.5, seed in any::<u64>()) {
        let a0 = random_simplex(t, &mut ChaCha8Rng::seed_from_u64(seed));
        let r = verify_mode_decay(&a0, &PdeConfig::diffusion(ad, 1.0, 25)).unwrap();
        prop_assert!(r.pass, "{}", r.table());
    }
}
