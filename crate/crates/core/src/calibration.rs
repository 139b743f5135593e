//! Return-probability calibration of the heating rate `c2`.
//!
//! Two qubits start in `|dd>`, wait `tau`, then receive one noisy XX gate of
//! requested angle `phi_in`. The fraction of shots found back in `|dd>` is
//! compared with [`return_probability`] to fit `c2`.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motional_noise::{derive_seed, noisy_angle, return_probability, sample_trajectory_with};

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationCurve {
    phi_in: Vec<f64>,
    tau: Vec<f64>,
    /// `p_return[i][j]` at `phi_in[i]`, `tau[j]`.
    p_return: Vec<Vec<f64>>,
    /// Shots per point; 0 marks exact (infinite-shot) values.
    shots: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CurveRow {
    phi_in: f64,
    tau_ms: f64,
    p_return: f64,
    shots: u64,
}

impl CalibrationCurve {
    pub fn new(phi_in: Vec<f64>, tau: Vec<f64>, p_return: Vec<Vec<f64>>, shots: u64) -> Result<Self> {
        if p_return.len() != phi_in.len() || p_return.iter().any(|row| row.len() != tau.len()) {
            return Err(Error::invalid("p_return must be phi_in.len() x tau.len()"));
        }
        if p_return.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("return probabilities must lie in [0, 1]"));
        }
        if tau.iter().any(|t| !(*t >= 0.0)) || phi_in.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("tau must be >= 0 and phi_in finite"));
        }
        Ok(Self {
            phi_in,
            tau,
            p_return,
            shots,
        })
    }

    /// Exact return probabilities for heating rate `c2`.
    pub fn analytic(phi_in: &[f64], tau: &[f64], c2: f64) -> Result<Self> {
        let p = phi_in
            .iter()
            .map(|&phi| tau.iter().map(|&t| return_probability(phi, c2 * t)).collect())
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Self::new(phi_in.to_vec(), tau.to_vec(), p, 0)
    }

    pub fn phi_in(&self) -> &[f64] {
        &self.phi_in
    }

    pub fn tau(&self) -> &[f64] {
        &self.tau
    }

    pub fn p_return(&self) -> &[Vec<f64>] {
        &self.p_return
    }

    pub fn shots(&self) -> u64 {
        self.shots
    }

    fn points(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.phi_in.iter().enumerate().flat_map(move |(i, &phi)| {
            self.tau
                .iter()
                .enumerate()
                .map(move |(j, &t)| (phi, t, self.p_return[i][j]))
        })
    }

    /// Long-format CSV: `phi_in,tau_ms,p_return,shots`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (phi_in, tau_ms, p_return) in self.points() {
            wr.serialize(CurveRow {
                phi_in,
                tau_ms,
                p_return,
                shots: self.shots,
            })?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the format of [`write_csv`](Self::write_csv); rows must form a full grid.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            let row: CurveRow = rec?;
            rows.push(row);
        }
        let mut phi: Vec<f64> = Vec::new();
        let mut tau: Vec<f64> = Vec::new();
        for row in &rows {
            if !phi.contains(&row.phi_in) {
                phi.push(row.phi_in);
            }
            if !tau.contains(&row.tau_ms) {
                tau.push(row.tau_ms);
            }
        }
        if rows.len() != phi.len() * tau.len() {
            return Err(Error::invalid("calibration CSV does not form a full (phi_in, tau) grid"));
        }
        let shots = rows.first().map_or(0, |r| r.shots);
        if rows.iter().any(|r| r.shots != shots) {
            return Err(Error::invalid("calibration CSV mixes shot counts"));
        }
        let mut p = vec![vec![f64::NAN; tau.len()]; phi.len()];
        for row in &rows {
            let i = phi.iter().position(|&x| x == row.phi_in).unwrap_or_default();
            let j = tau.iter().position(|&x| x == row.tau_ms).unwrap_or_default();
            p[i][j] = row.p_return;
        }
        if p.iter().flatten().any(|x| x.is_nan()) {
            return Err(Error::invalid("calibration CSV has duplicate grid points"));
        }
        Self::new(phi, tau, p, shots)
    }
}

/// Synthetic protocol data: per point, `shots` independent heating histories
/// and one Bernoulli readout each.
pub fn simulate_calibration(
    phi_grid: &[f64],
    tau_grid: &[f64],
    c2_true: f64,
    shots: u64,
    seed: u64,
) -> Result<CalibrationCurve> {
    if shots == 0 {
        return Err(Error::invalid("shots must be >= 1"));
    }
    if !(c2_true >= 0.0) {
        return Err(Error::invalid("c2 must be >= 0"));
    }
    let n_tau = tau_grid.len();
    let flat = (0..phi_grid.len() * n_tau)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let (i, j) = (k / n_tau, k % n_tau);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64, j as u64]));
            let times = [tau_grid[j]];
            let mut hits = 0u64;
            for _ in 0..shots {
                let traj = sample_trajectory_with(&times, c2_true, true, &mut rng)?;
                let phi = noisy_angle(phi_grid[i], traj.u[0]);
                if rng.gen::<f64>() < (0.25 * phi).cos().powi(2) {
                    hits += 1;
                }
            }
            Ok(hits as f64 / shots as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let p = flat.chunks(n_tau.max(1)).map(<[f64]>::to_vec).collect();
    CalibrationCurve::new(phi_grid.to_vec(), tau_grid.to_vec(), p, shots)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct C2Fit {
    pub c2_hat: f64,
    /// Sum of squared residuals at the optimum.
    pub residual: f64,
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if hi - lo <= tol * (1.0 + lo.abs()) {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Log-spaced scan (with an explicit zero) followed by golden-section
/// refinement between the neighbours of the best node.
fn minimize_nonneg(f: &dyn Fn(f64) -> f64, log_lo: f64, log_hi: f64, n: usize) -> (f64, f64) {
    let mut grid = vec![0.0];
    grid.extend((0..n).map(|k| 10f64.powf(log_lo + (log_hi - log_lo) * k as f64 / (n - 1) as f64)));
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let k = vals
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < vals[b] { i } else { b });
    let lo = grid[k.saturating_sub(1)];
    let hi = grid[(k + 1).min(grid.len() - 1)];
    let x = golden_min(f, lo, hi, 1e-12);
    let fx = f(x);
    if fx < vals[k] {
        (x, fx)
    } else {
        (grid[k], vals[k])
    }
}

/// Pooled least-squares estimate of `c2 >= 0` over every `(phi_in, tau)` point.
pub fn fit_c2(curve: &CalibrationCurve) -> Result<C2Fit> {
    if curve.phi_in.iter().all(|&p| p == 0.0) {
        return Err(Error::Unidentifiable(
            "every phi_in is zero, so the data do not depend on c2".into(),
        ));
    }
    let mut taus = curve.tau.clone();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    if taus.len() < 2 {
        return Err(Error::invalid("fit_c2 needs at least two distinct tau values"));
    }
    let pts: Vec<(f64, f64, f64)> = curve.points().collect();
    let objective = |c2: f64| -> f64 {
        pts.iter()
            .map(|&(phi, t, p)| {
                let m = return_probability(phi, c2 * t).unwrap_or(f64::NAN);
                (p - m).powi(2)
            })
            .sum()
    };
    let t_max = taus[taus.len() - 1].max(f64::MIN_POSITIVE);
    // lambda from 1e-7 to 1e3 at the longest wait
    let (lo, hi) = ((1e-7 / t_max).log10(), (1e3 / t_max).log10());
    let (c2_hat, residual) = minimize_nonneg(&objective, lo, hi, 201);
    Ok(C2Fit { c2_hat, residual })
}

/// Reference fit `P = 1/2 + 1/2 exp(-Gamma tau) cos(phi_in/2 + delta(phi_in))`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseDampingFit {
    pub gamma: f64,
    /// One phase shift per `phi_in`, rad.
    pub phase_shift: Vec<f64>,
    pub residual: f64,
}

fn phase_damping_profile(curve: &CalibrationCurve, gamma: f64) -> (f64, Vec<f64>) {
    let decay: Vec<f64> = curve.tau.iter().map(|&t| (-gamma * t).exp()).collect();
    let norm: f64 = decay.iter().map(|d| d * d).sum();
    let mut residual = 0.0;
    let mut coeffs = Vec::with_capacity(curve.phi_in.len());
    for row in &curve.p_return {
        let proj: f64 = row.iter().zip(&decay).map(|(p, d)| (2.0 * p - 1.0) * d).sum();
        let c = if norm > 0.0 { (proj / norm).clamp(-1.0, 1.0) } else { 0.0 };
        residual += row
            .iter()
            .zip(&decay)
            .map(|(p, d)| (p - 0.5 - 0.5 * d * c).powi(2))
            .sum::<f64>();
        coeffs.push(c);
    }
    (residual, coeffs)
}

/// Least-squares phase-damping fit: shared `Gamma >= 0`, free phase per `phi_in`.
pub fn fit_phase_damping(curve: &CalibrationCurve) -> Result<PhaseDampingFit> {
    if curve.tau.is_empty() || curve.phi_in.is_empty() {
        return Err(Error::invalid("empty calibration curve"));
    }
    let t_max = curve.tau.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let f = |g: f64| phase_damping_profile(curve, g).0;
    let (gamma, residual) = minimize_nonneg(&f, (1e-6 / t_max).log10(), (1e2 / t_max).log10(), 161);
    let (_, coeffs) = phase_damping_profile(curve, gamma);
    let phase_shift = curve
        .phi_in
        .iter()
        .zip(coeffs)
        .map(|(&phi, c)| c.acos() - 0.5 * phi)
        .collect();
    Ok(PhaseDampingFit {
        gamma,
        phase_shift,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    const PHI: [f64; 4] = [PI / 2.0, PI, 1.5 * PI, 2.0 * PI];
    const TAU: [f64; 4] = [5.0, 10.0, 20.0, 40.0];

    #[test]
    fn zero_angle_column_is_one() {
        let c = simulate_calibration(&[0.0, PI], &TAU, 0.05, 500, 1).unwrap();
        assert!(c.p_return()[0].iter().all(|&p| p == 1.0));
    }

    #[test]
    fn exact_data_recovered() {
        let c = CalibrationCurve::analytic(&PHI, &TAU, 0.02).unwrap();
        let fit = fit_c2(&c).unwrap();
        assert!((fit.c2_hat - 0.02).abs() < 1e-8, "{fit:?}");
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn noiseless_data_fit_zero() {
        let c = CalibrationCurve::analytic(&PHI, &TAU, 0.0).unwrap();
        let fit = fit_c2(&c).unwrap();
        assert!(fit.c2_hat < 1e-4);
    }

    #[test]
    fn degenerate_inputs() {
        let c = CalibrationCurve::analytic(&[0.0, 0.0], &TAU, 0.02).unwrap();
        assert!(matches!(fit_c2(&c), Err(Error::Unidentifiable(_))));
        let c = CalibrationCurve::analytic(&PHI, &[10.0], 0.02).unwrap();
        assert!(fit_c2(&c).is_err());
        assert!(simulate_calibration(&PHI, &TAU, 0.02, 0, 1).is_err());
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        assert!(CalibrationCurve::new(vec![1.0], vec![1.0], vec![vec![1.2]], 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let c = simulate_calibration(&PHI, &TAU, 0.02, 100, 3).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("phi_in,tau_ms,p_return,shots\n"));
        assert_eq!(CalibrationCurve::read_csv(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn phase_damping_exact_on_own_model() {
        let gamma = 0.03;
        let p: Vec<Vec<f64>> = PHI
            .iter()
            .map(|&phi| {
                TAU.iter()
                    .map(|&t| 0.5 + 0.5 * (-gamma * t).exp() * (0.5 * phi + 0.3).cos())
                    .collect()
            })
            .collect();
        let c = CalibrationCurve::new(PHI.to_vec(), TAU.to_vec(), p, 0).unwrap();
        let fit = fit_phase_damping(&c).unwrap();
        assert!((fit.gamma - gamma).abs() < 1e-6, "{fit:?}");
        assert!(fit.residual < 1e-12);
    }
}
