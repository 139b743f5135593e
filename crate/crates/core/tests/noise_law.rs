mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use ioncodesign::motional_noise::{
    angle_correlation, hyp1f2, markovian_noise_to_signal, noisy_angle, return_probability, sample_trajectory,
    sample_trajectory_with, AngleDistribution, NoiseParams,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{latent_average, simpson};

#[test]
fn single_time_displacement_is_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (c2, tau) = (0.05, 12.0);
    let n = 50_000;
    let mut us: Vec<f64> = (0..n)
        .map(|_| sample_trajectory_with(&[tau], c2, true, &mut rng).unwrap().u[0])
        .collect();
    let mean = us.iter().sum::<f64>() / n as f64;
    assert!((mean - c2 * tau).abs() < 4.0 * c2 * tau / (n as f64).sqrt());
    let ks = common::ks_statistic(&mut us, |u| 1.0 - (-u / (c2 * tau)).exp());
    assert!(ks < 0.01, "KS {ks}");
}

#[test]
fn uncorrelated_mode_has_same_marginal_but_no_memory() {
    let times = [10.0, 10.5];
    let n = 40_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pairs: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let t = sample_trajectory_with(&times, 0.1, false, &mut rng).unwrap();
            (t.u[0], t.u[1])
        })
        .collect();
    let (m0, m1) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (m0, m1) = (m0 / n as f64, m1 / n as f64);
    assert!((m0 - 1.0).abs() < 0.03 && (m1 - 1.05).abs() < 0.03);
    let cov = pairs.iter().map(|p| (p.0 - m0) * (p.1 - m1)).sum::<f64>() / n as f64;
    assert!(cov.abs() / (m0 * m1) < 0.03, "cov {cov}");
}

#[test]
fn sampling_is_reproducible_per_seed() {
    let times: Vec<f64> = (0..50).map(|k| 0.01 * k as f64).collect();
    let a = sample_trajectory(&times, &NoiseParams::new(0.3, 42)).unwrap();
    let b = sample_trajectory(&times, &NoiseParams::new(0.3, 42)).unwrap();
    let c = sample_trajectory(&times, &NoiseParams::new(0.3, 43)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn unsorted_times_rejected() {
    assert!(sample_trajectory(&[1.0, 0.5], &NoiseParams::new(0.1, 0)).is_err());
    assert!(sample_trajectory(&[-1.0], &NoiseParams::new(0.1, 0)).is_err());
}

#[test]
fn pdf_normalized_and_matches_cdf() {
    for &(phi_in, lambda) in &[(PI, 0.1), (PI / 2.0, 1.0), (2.0, 10.0)] {
        let d = AngleDistribution::new(phi_in, lambda).unwrap();
        let pdf = |phi: f64| d.pdf(phi).unwrap();
        // the density is integrable but singular at 0 for lambda > 1
        let mass = d.cdf(1e-3 * phi_in) + simpson(&pdf, 1e-3 * phi_in, phi_in, 1e-12);
        assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-8);
        let mid = 0.6 * phi_in;
        let partial = d.cdf(1e-3 * phi_in) + simpson(&pdf, 1e-3 * phi_in, mid, 1e-12);
        assert_abs_diff_eq!(partial, d.cdf(mid), epsilon = 1e-8);
    }
    assert!(AngleDistribution::new(1.0, 0.0).unwrap().pdf(0.5).is_err());
}

#[test]
fn moments_match_quadrature() {
    for &lambda in &[0.05, 0.7, 3.0] {
        let phi_in = 2.5;
        let m = AngleDistribution::new(phi_in, lambda).unwrap().moments();
        let mean = latent_average(|x| x, phi_in, lambda);
        let second = latent_average(|x| x * x, phi_in, lambda);
        let log_mean = latent_average(|x| x.ln(), phi_in, lambda);
        assert_abs_diff_eq!(m.mean, mean, epsilon = 1e-10);
        assert_abs_diff_eq!(m.variance, second - mean * mean, epsilon = 1e-10);
        assert_abs_diff_eq!(m.typical, log_mean.exp(), epsilon = 1e-10);
    }
}

#[test]
fn short_time_law_approaches_exact_density() {
    let d = AngleDistribution::new(PI, 0.01).unwrap();
    for &phi in &[0.995 * PI, 0.99 * PI, 0.98 * PI] {
        let exact = d.pdf(phi).unwrap();
        let approx = d.short_time_pdf(phi).unwrap();
        assert!((approx / exact - 1.0).abs() < 0.05, "{phi}: {approx} vs {exact}");
    }
}

#[test]
fn return_probability_limits() {
    assert_eq!(return_probability(PI, 0.0).unwrap(), (PI / 4.0).cos().powi(2));
    assert_eq!(return_probability(0.0, 3.0).unwrap(), 1.0);
    // all angle mass collapses to zero as lambda grows
    assert!((return_probability(PI, 1e4).unwrap() - 1.0).abs() < 1e-3);
    assert!(return_probability(PI, -1.0).is_err());
}

#[test]
fn hypergeometric_matches_integral_form() {
    // 1F2(a; 3/2, a+1; -x^2/4) = int_0^1 sinc(x u^(1/2a)) du
    for &(a, x) in &[(1.5, 2.0), (3.0, 6.0), (0.75, 9.0), (11.0, 4.0)] {
        let f = |u: f64| {
            let z = x * u.powf(0.5 / a);
            if z == 0.0 { 1.0 } else { z.sin() / z }
        };
        let oracle = simpson(&f, 0.0, 1.0, 1e-14);
        assert_abs_diff_eq!(hyp1f2(a, 1.5, a + 1.0, -x * x / 4.0).unwrap(), oracle, epsilon = 1e-10);
    }
}

#[test]
fn late_time_correlation_limit() {
    for &c2 in &[0.005, 0.02, 0.3] {
        for &delta in &[0.5, 5.0, 50.0] {
            let tau = 1e4 / c2;
            let c = angle_correlation(tau, delta, c2).unwrap();
            assert!((c - 1.0 / (1.0 + 0.5 * c2 * delta)).abs() < 1e-3);
        }
    }
    assert_abs_diff_eq!(angle_correlation(3.0, 0.0, 0.2).unwrap(), 1.0, epsilon = 1e-15);
}

#[test]
fn markovian_eta_scales_inversely_with_steps() {
    let a = markovian_noise_to_signal(10, 0.4).unwrap();
    let b = markovian_noise_to_signal(20, 0.4).unwrap();
    assert_abs_diff_eq!(a.eta, 2.0 * b.eta, epsilon = 1e-15);
    assert_abs_diff_eq!(a.beta, 0.16 / 1.8, epsilon = 1e-15);
    let m = AngleDistribution::new(1.0, 0.4).unwrap().moments();
    // beta is the squared relative spread of a single gate angle
    assert_abs_diff_eq!(a.beta, m.variance / (m.mean * m.mean), epsilon = 1e-12);
}

proptest! {
    #[test]
    fn return_probability_is_a_probability(phi in 0.0f64..(4.0 * PI), lambda in 0.0f64..20.0) {
        let p = return_probability(phi, lambda).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p));
    }

    #[test]
    fn return_probability_matches_quadrature(phi in 0.1f64..(3.0 * PI), lambda in 0.01f64..5.0) {
        let oracle = latent_average(|x| (0.25 * x).cos().powi(2), phi, lambda);
        prop_assert!((return_probability(phi, lambda).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn imparted_angle_never_exceeds_request(phi in 0.0f64..10.0, u in 0.0f64..50.0) {
        let out = noisy_angle(phi, u);
        prop_assert!(out <= phi && out >= 0.0);
    }

    #[test]
    fn correlation_in_unit_interval(tau in 0.01f64..100.0, delta in 0.0f64..100.0, c2 in 0.0f64..1.0) {
        let c = angle_correlation(tau, delta, c2).unwrap();
        prop_assert!(c > 0.0 && c <= 1.0 + 1e-12);
    }
}
