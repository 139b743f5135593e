//! Motional-heating model of gate-angle errors.
//!
//! The lowest longitudinal phonon mode starts in its vacuum and its coherent
//! amplitude diffuses. In units of the laser waist the scaled amplitude
//! `z = (a_osc / a_laser) alpha` is a complex Wiener process with
//! `E|z(tau)|^2 = c2 tau`, and a gate started at `tau` imparts
//! `phi = phi_in exp(-|z(tau)|^2)`. Everything about a single gate depends only
//! on the latent `lambda = c2 tau`.

mod hypergeometric;

pub use hypergeometric::{hyp1f2, hyp1f2_counted};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Heating rate constant, 1/ms.
    pub c2: f64,
    pub seed: u64,
    /// When false, every gate draws an independent displacement with the
    /// same marginal law (the Markovian idealization).
    #[serde(default = "default_correlated")]
    pub correlated: bool,
}

fn default_correlated() -> bool {
    true
}

impl NoiseParams {
    pub fn new(c2: f64, seed: u64) -> Self {
        Self {
            c2,
            seed,
            correlated: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c2 >= 0.0) || !self.c2.is_finite() {
            return Err(Error::invalid(format!("c2 must be finite and >= 0, got {}", self.c2)));
        }
        Ok(())
    }
}

/// Sampled displacement `u_m = |z(tau_m)|^2` along one diffusion path.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionalTrajectory {
    pub times: Vec<f64>,
    pub u: Vec<f64>,
}

impl MotionalTrajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }
}

/// Mixes a base seed with stream indices (splitmix64 finalizer per word).
pub fn derive_seed(base: u64, streams: &[u64]) -> u64 {
    fn mix(mut x: u64) -> u64 {
        x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        x ^ (x >> 31)
    }
    streams
        .iter()
        .fold(mix(base), |acc, &s| mix(acc ^ mix(s.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn sample_trajectory(times: &[f64], params: &NoiseParams) -> Result<MotionalTrajectory> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    sample_trajectory_with(times, params.c2, params.correlated, &mut rng)
}

/// Trajectory sampling driven by a caller-supplied generator.
///
/// Correlated paths use exact Gaussian increments of variance `c2 dtau / 2` per
/// quadrature starting from `z(0) = 0`; uncorrelated paths redraw `z(tau_m)`
/// from scratch at every time.
pub fn sample_trajectory_with<R: Rng + ?Sized>(
    times: &[f64],
    c2: f64,
    correlated: bool,
    rng: &mut R,
) -> Result<MotionalTrajectory> {
    if times.first().is_some_and(|&t| !(t >= 0.0)) {
        return Err(Error::invalid("trajectory times must start at or after 0"));
    }
    if times.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::invalid("trajectory times must be sorted ascending"));
    }
    let mut u = Vec::with_capacity(times.len());
    let (mut re, mut im, mut prev) = (0.0f64, 0.0f64, 0.0f64);
    for &t in times {
        let (gr, gi): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        if correlated {
            let sd = (0.5 * c2 * (t - prev)).sqrt();
            re += sd * gr;
            im += sd * gi;
            prev = t;
        } else {
            let sd = (0.5 * c2 * t).sqrt();
            re = sd * gr;
            im = sd * gi;
        }
        u.push(re * re + im * im);
    }
    Ok(MotionalTrajectory {
        times: times.to_vec(),
        u,
    })
}

/// Angle actually imparted when `phi_in` is requested at displacement `u`.
#[inline]
pub fn noisy_angle(phi_in: f64, u: f64) -> f64 {
    phi_in * (-u).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleMoments {
    pub mean: f64,
    pub typical: f64,
    pub variance: f64,
}

/// Marginal law of the imparted angle for input `phi_in` at latent `lambda`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleDistribution {
    pub phi_in: f64,
    pub lambda: f64,
}

impl AngleDistribution {
    pub fn new(phi_in: f64, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !(phi_in >= 0.0) {
            return Err(Error::invalid("angle distribution needs phi_in >= 0 and lambda >= 0"));
        }
        Ok(Self { phi_in, lambda })
    }

    fn require_spread(&self) -> Result<()> {
        if self.lambda == 0.0 {
            return Err(Error::invalid(
                "lambda = 0 is a point mass at phi_in and has no density",
            ));
        }
        Ok(())
    }

    /// `(1 / (lambda phi)) (phi / phi_in)^(1/lambda)` on `(0, phi_in]`.
    pub fn pdf(&self, phi: f64) -> Result<f64> {
        self.require_spread()?;
        if !(phi > 0.0 && phi <= self.phi_in) {
            return Ok(0.0);
        }
        let nu = 1.0 / self.lambda;
        Ok(nu / phi * (phi / self.phi_in).powf(nu))
    }

    pub fn cdf(&self, phi: f64) -> f64 {
        if phi >= self.phi_in {
            1.0
        } else if phi <= 0.0 || self.lambda == 0.0 {
            0.0
        } else {
            (phi / self.phi_in).powf(1.0 / self.lambda)
        }
    }

    /// Exponential approximation valid near `phi_in` at small `lambda`.
    pub fn short_time_pdf(&self, phi: f64) -> Result<f64> {
        self.require_spread()?;
        if phi > self.phi_in {
            return Ok(0.0);
        }
        let scale = self.lambda * self.phi_in;
        Ok((-(self.phi_in - phi) / scale).exp() / scale)
    }

    pub fn moments(&self) -> AngleMoments {
        let (p, l) = (self.phi_in, self.lambda);
        AngleMoments {
            mean: p / (1.0 + l),
            typical: p * (-l).exp(),
            variance: p * p * l * l / ((1.0 + 2.0 * l) * (1.0 + l).powi(2)),
        }
    }
}

/// Correlation of the angles imparted by gates at `tau` and `tau + delta`.
pub fn angle_correlation(tau: f64, delta: f64, c2: f64) -> Result<f64> {
    if !(tau > 0.0) || !(delta >= 0.0) || !(c2 >= 0.0) {
        return Err(Error::invalid("angle correlation needs tau > 0, delta >= 0, c2 >= 0"));
    }
    let l1 = c2 * tau;
    let l2 = c2 * (tau + delta);
    let denom = 1.0 + 2.0 * l1 + c2 * delta + c2 * c2 * tau * delta;
    Ok(tau / (tau + delta) * ((1.0 + 2.0 * l1) * (1.0 + 2.0 * l2)).sqrt() / denom)
}

/// `E[cos^2(phi / 4)]`: probability of returning to `|dd>` after a noisy XX gate.
pub fn return_probability(phi_in: f64, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    let base = (0.25 * phi_in).cos().powi(2);
    if lambda == 0.0 || phi_in == 0.0 {
        return Ok(base);
    }
    let a = 1.0 + 0.5 / lambda;
    let f = hyp1f2(a, 1.5, a + 1.0, -phi_in * phi_in / 16.0)?;
    Ok(base + phi_in * phi_in * lambda / (8.0 + 16.0 * lambda) * f)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseToSignal {
    pub beta: f64,
    pub eta: f64,
}

/// Noise-to-signal ratio of `steps` independent gates, `eta = sqrt(beta) / steps`.
pub fn markovian_noise_to_signal(steps: usize, lambda: f64) -> Result<NoiseToSignal> {
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid("lambda must be >= 0"));
    }
    let beta = lambda * lambda / (1.0 + 2.0 * lambda);
    Ok(NoiseToSignal {
        beta,
        eta: beta.sqrt() / steps as f64,
    })
}
