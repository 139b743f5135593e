mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use ioncodesign::feedforward::{
    avg_gate_fidelity, correct_circuit, gate_fidelity, optimal_input_angle, ControlQuery, FeedforwardTable,
    DEFAULT_PHI_CAP,
};
use ioncodesign::hamiltonian::SpinHamiltonian;
use ioncodesign::trotter::{build_trotter_circuit, GateTiming};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::latent_average;

#[test]
fn average_fidelity_matches_quadrature() {
    for &lambda in &[0.02, 0.3, 1.0, 4.0] {
        for &phi_p in &[0.3, PI / 2.0, 2.0 * PI] {
            for &phi_in in &[0.0, 0.8, 3.0, 7.5, 12.0] {
                let oracle = latent_average(|x| gate_fidelity(x, phi_p), phi_in, lambda);
                let got = avg_gate_fidelity(phi_in, phi_p, lambda).unwrap();
                assert_abs_diff_eq!(got, oracle, epsilon = 1e-8);
            }
        }
    }
}

#[test]
fn optimum_is_stationary_when_interior() {
    let h = 1e-4;
    let mut interior = 0;
    for &lambda in &[0.05, 0.2, 0.5] {
        for &phi_p in &[0.5, 1.0, PI / 2.0, 2.5] {
            let opt = optimal_input_angle(&ControlQuery::new(phi_p, lambda)).unwrap();
            if opt.phi_in < 1e-2 || opt.phi_in > DEFAULT_PHI_CAP - 1e-2 {
                continue;
            }
            interior += 1;
            let f = |x: f64| avg_gate_fidelity(x, phi_p, lambda).unwrap();
            let d = (f(opt.phi_in + h) - f(opt.phi_in - h)) / (2.0 * h);
            assert!(d.abs() < 1e-4, "lambda {lambda} phi_p {phi_p}: derivative {d}");
            assert!(opt.phi_in > phi_p, "input must overshoot the target");
        }
    }
    assert!(interior >= 8);
}

#[test]
fn optimum_dominates_grid() {
    for &lambda in &[0.01, 0.3, 2.0] {
        for &phi_p in &[0.2, 1.5, 3.0, 6.0] {
            let opt = optimal_input_angle(&ControlQuery::new(phi_p, lambda)).unwrap();
            for k in 0..=400 {
                let x = DEFAULT_PHI_CAP * k as f64 / 400.0;
                assert!(avg_gate_fidelity(x, phi_p, lambda).unwrap() <= opt.fidelity + 1e-12);
            }
            assert!(opt.fidelity >= avg_gate_fidelity(phi_p, phi_p, lambda).unwrap());
        }
    }
}

#[test]
fn table_agrees_with_direct_solve() {
    let table = FeedforwardTable::build(2.0 * PI, 0.6, DEFAULT_PHI_CAP).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..100 {
        let phi_p = rng.gen_range(0.0..2.0 * PI);
        let lambda = rng.gen_range(0.0..0.6);
        let direct = optimal_input_angle(&ControlQuery::new(phi_p, lambda)).unwrap();
        let memo = table.lookup(phi_p, lambda).unwrap();
        assert!(
            (direct.fidelity - memo.fidelity).abs() < 1e-3,
            "{phi_p} {lambda}: {direct:?} vs {memo:?}"
        );
    }
}

#[test]
fn corrected_circuit_never_worse_per_gate() {
    let h = SpinHamiltonian::new(
        vec![vec![0.0, 0.8, -0.4], vec![0.8, 0.0, 0.6], vec![-0.4, 0.6, 0.0]],
        vec![1.0, -2.0, 0.5],
    )
    .unwrap();
    let c2 = 0.05;
    let circuit = build_trotter_circuit(&h, 2.0, 6, &GateTiming::default()).unwrap();
    let corrected = correct_circuit(&circuit, c2).unwrap();
    for (g, cg) in circuit.gates().iter().zip(corrected.gates()) {
        assert_eq!(g.start_time, cg.start_time);
        if !g.noisy {
            assert_eq!(g.spec, cg.spec);
            continue;
        }
        let lambda = c2 * g.start_time;
        let phi_p = g.spec.angle;
        let before = avg_gate_fidelity(phi_p.abs(), phi_p.abs(), lambda).unwrap();
        let after = avg_gate_fidelity(cg.spec.angle.abs(), phi_p.abs(), lambda).unwrap();
        assert!(after >= before - 1e-9);
        assert_eq!(cg.spec.angle.signum(), phi_p.signum());
    }
    assert_eq!(correct_circuit(&circuit, 0.0).unwrap(), circuit);
}

#[test]
fn invalid_queries_rejected() {
    assert!(optimal_input_angle(&ControlQuery::new(1.0, -0.1)).is_err());
    assert!(optimal_input_angle(&ControlQuery::new(f64::NAN, 0.1)).is_err());
    let q = ControlQuery { phi_cap: 0.0, ..ControlQuery::new(1.0, 0.1) };
    assert!(optimal_input_angle(&q).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn average_fidelity_is_bounded(phi_in in 0.0f64..(4.0 * PI), phi_p in 0.0f64..(4.0 * PI), lambda in 0.0f64..10.0) {
        let f = avg_gate_fidelity(phi_in, phi_p, lambda).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
    }

    #[test]
    fn optimal_beats_uncorrected(phi_p in 0.0f64..(2.0 * PI), lambda in 0.0f64..3.0) {
        let opt = optimal_input_angle(&ControlQuery::new(phi_p, lambda)).unwrap();
        prop_assert!(opt.phi_in >= 0.0 && opt.phi_in <= DEFAULT_PHI_CAP);
        prop_assert!(opt.fidelity >= avg_gate_fidelity(phi_p, phi_p, lambda).unwrap() - 1e-12);
    }

    #[test]
    fn noiseless_optimum_is_the_target(phi_p in 0.0f64..(2.0 * PI)) {
        let opt = optimal_input_angle(&ControlQuery::new(phi_p, 0.0)).unwrap();
        prop_assert!((opt.fidelity - 1.0).abs() < 1e-12);
        prop_assert!((opt.phi_in - phi_p).abs() < 1e-5);
    }
}
