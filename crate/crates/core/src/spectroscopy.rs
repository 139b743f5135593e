//! Magnetization response, damped-Fourier spectra, Hellinger distance and
//! process-fidelity traces.
//!
//! Every observable is computed from the full propagator `U(t)` of whichever
//! evolution is selected, so one circuit realization yields both the response
//! `S(t)` and the fidelity against exact evolution.

use std::io::Write;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedforward::{correct_circuit_with, FeedforwardTable};
use crate::hamiltonian::{ExactPropagator, SpinHamiltonian};
use crate::motional_noise::{derive_seed, noisy_angle, sample_trajectory_with, NoiseParams};
use crate::spinsim::{basis_magnetization, circuit_unitary, UnitaryMatrix, DEFAULT_MAX_QUBITS};
use crate::trotter::{build_trotter_circuit, GateTiming, TimedCircuit};

/// Relative tolerance used to accept a time or frequency grid as uniform.
const GRID_TOL: f64 = 1e-9;

/// `n` evenly spaced points on `[lo, hi]`.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect(),
    }
}

fn grid_step(grid: &[f64], what: &str) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::invalid(format!("{what} grid needs at least two points")));
    }
    let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(step > 0.0) {
        return Err(Error::invalid(format!("{what} grid must be increasing")));
    }
    let uniform = grid
        .windows(2)
        .all(|w| ((w[1] - w[0]) - step).abs() <= GRID_TOL * step.max(1.0));
    if !uniform {
        return Err(Error::invalid(format!("{what} grid must be uniform")));
    }
    Ok(step)
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.first().is_some_and(|&t| t < 0.0) {
        return Err(Error::invalid("sample times must be >= 0"));
    }
    if times.len() >= 2 {
        grid_step(times, "time")?;
    }
    Ok(())
}

fn trapezoid_weights(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k == 0 || k + 1 == n { 0.5 } else { 1.0 })
}

/// Noiseless Trotter evolution with `steps` product-formula steps per sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct TrotterEvolver {
    pub steps: usize,
    pub timing: GateTiming,
}

/// Trotter evolution with motional angle noise on the noisy gate kinds.
#[derive(Clone, Debug)]
pub struct NoisyEvolver {
    pub steps: usize,
    pub timing: GateTiming,
    pub noise: NoiseParams,
    pub n_runs: usize,
    /// When set, noisy gates are fed optimal input angles from this table.
    pub feedforward: Option<Arc<FeedforwardTable>>,
}

#[derive(Clone, Debug)]
pub enum Evolver {
    Exact,
    Trotter(TrotterEvolver),
    Noisy(NoisyEvolver),
}

impl Evolver {
    fn circuit(&self, h: &SpinHamiltonian, t: f64) -> Result<Option<TimedCircuit>> {
        let (steps, timing) = match self {
            Evolver::Exact => return Ok(None),
            Evolver::Trotter(e) => (e.steps, &e.timing),
            Evolver::Noisy(e) => (e.steps, &e.timing),
        };
        if t == 0.0 {
            return Ok(Some(TimedCircuit::empty(h.n_spins())));
        }
        build_trotter_circuit(h, t, steps, timing).map(Some)
    }

    /// Number of independent realizations averaged at each time.
    fn effective_runs(&self) -> usize {
        match self {
            Evolver::Noisy(e) if e.noise.c2 > 0.0 => e.n_runs,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Evolver::Exact => Ok(()),
            Evolver::Trotter(e) => e.timing.validate(),
            Evolver::Noisy(e) => {
                e.noise.validate()?;
                if e.n_runs == 0 {
                    return Err(Error::invalid("n_runs must be >= 1"));
                }
                e.timing.validate()
            }
        }
    }
}

/// Builds a feedforward table large enough for every circuit `steps` and
/// `times` can produce under `timing` at heating rate `c2`.
pub fn feedforward_table_for(
    h: &SpinHamiltonian,
    times: &[f64],
    steps: &[usize],
    timing: &GateTiming,
    c2: f64,
    phi_cap: f64,
) -> Result<FeedforwardTable> {
    let (mut phi_max, mut lambda_max) = (0.0f64, 0.0f64);
    for &r in steps {
        for &t in times {
            let c = build_trotter_circuit(h, t, r, timing)?;
            let (p, l) = crate::feedforward::circuit_extent(&c, c2);
            phi_max = phi_max.max(p);
            lambda_max = lambda_max.max(l);
        }
    }
    FeedforwardTable::build(phi_max, lambda_max, phi_cap)
}

/// Realized propagators for time index `t_idx`, one per run.
fn realize(
    h: &SpinHamiltonian,
    evolver: &Evolver,
    t_idx: usize,
    t: f64,
    exact: &ExactPropagator,
) -> Result<Vec<UnitaryMatrix>> {
    let Some(circuit) = evolver.circuit(h, t)? else {
        return Ok(vec![exact.unitary(t)]);
    };
    let Evolver::Noisy(e) = evolver else {
        return Ok(vec![circuit_unitary(&circuit, None)?]);
    };
    let circuit = match &e.feedforward {
        Some(table) if e.noise.c2 > 0.0 => correct_circuit_with(&circuit, e.noise.c2, table)?,
        _ => circuit,
    };
    if e.noise.c2 == 0.0 {
        return Ok(vec![circuit_unitary(&circuit, None)?]);
    }
    let noisy_times: Vec<f64> = circuit
        .gates()
        .iter()
        .filter(|g| g.noisy)
        .map(|g| g.start_time)
        .collect();
    (0..e.n_runs)
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(e.noise.seed, &[run as u64, t_idx as u64]));
            let traj = sample_trajectory_with(&noisy_times, e.noise.c2, e.noise.correlated, &mut rng)?;
            let mut u = traj.u.iter();
            let angles: Vec<f64> = circuit
                .gates()
                .iter()
                .map(|g| {
                    if g.noisy {
                        noisy_angle(g.spec.angle, *u.next().unwrap_or(&0.0))
                    } else {
                        g.spec.angle
                    }
                })
                .collect();
            circuit_unitary(&circuit, Some(&angles))
        })
        .collect()
}

/// `2 sum_{j: m_j > 0} (m_j / 2^N) <z_j| U^dag S^z_tot U |z_j>`
fn response_from_unitary(u: &UnitaryMatrix) -> f64 {
    let n = u.n_qubits();
    let dim = u.dim();
    let m: Vec<f64> = (0..dim).map(|k| basis_magnetization(n, k)).collect();
    let mat = u.matrix();
    let mut s = 0.0;
    for j in (0..dim).filter(|&j| m[j] > 0.0) {
        let expect: f64 = mat.column(j).iter().zip(&m).map(|(a, mk)| a.norm_sqr() * mk).sum();
        s += m[j] * expect;
    }
    2.0 * s / dim as f64
}

/// Response series and fidelity trace from one pass over the realizations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Observation {
    pub response: ResponseSeries,
    pub fidelity: FidelityTrace,
}

/// Evaluates `S(t)` and `F(t)` for `evolver` on `times`, averaging over runs.
///
/// Runs are evaluated concurrently; averages are reduced in run order so the
/// result is bit-identical for a given seed.
pub fn observe(h: &SpinHamiltonian, evolver: &Evolver, times: &[f64]) -> Result<Observation> {
    h.validate()?;
    evolver.validate()?;
    check_times(times)?;
    if h.n_spins() > DEFAULT_MAX_QUBITS {
        return Err(Error::ResourceLimit(format!(
            "{} spins exceeds the matrix limit of {DEFAULT_MAX_QUBITS}",
            h.n_spins()
        )));
    }
    let exact = ExactPropagator::new(h);
    let per_time: Vec<(f64, f64)> = times
        .par_iter()
        .enumerate()
        .map(|(k, &t)| -> Result<(f64, f64)> {
            let reference = exact.unitary(t);
            let us = realize(h, evolver, k, t, &exact)?;
            let (mut s, mut f) = (0.0, 0.0);
            for u in &us {
                s += response_from_unitary(u);
                f += reference.process_fidelity(u).min(1.0);
            }
            let runs = evolver.effective_runs() as f64;
            Ok((s / runs, f / runs))
        })
        .collect::<Result<_>>()?;
    let (s, f): (Vec<f64>, Vec<f64>) = per_time.into_iter().unzip();
    Ok(Observation {
        response: ResponseSeries {
            times: times.to_vec(),
            s,
        },
        fidelity: FidelityTrace::new(times.to_vec(), f)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResponseSeries {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
}

impl ResponseSeries {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "S"])?;
        for (t, s) in self.times.iter().zip(&self.s) {
            wr.serialize((t, s))?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn response_function(
    evolver: &Evolver,
    h: &SpinHamiltonian,
    times: &[f64],
) -> Result<ResponseSeries> {
    Ok(observe(h, evolver, times)?.response)
}

/// Process fidelity of `evolver` against exact evolution at each of `times`.
pub fn fidelity_trace(
    h: &SpinHamiltonian,
    evolver: &Evolver,
    times: &[f64],
) -> Result<FidelityTrace> {
    Ok(observe(h, evolver, times)?.fidelity)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityTrace {
    pub times: Vec<f64>,
    pub f: Vec<f64>,
    /// Trapezoidal time average of `f`.
    pub f_int: f64,
}

impl FidelityTrace {
    pub fn new(times: Vec<f64>, f: Vec<f64>) -> Result<Self> {
        if times.len() != f.len() || times.is_empty() {
            return Err(Error::invalid("fidelity trace needs matching, non-empty times and values"));
        }
        check_times(&times)?;
        let f_int = if times.len() == 1 {
            f[0]
        } else {
            let span = times[times.len() - 1] - times[0];
            let dt = span / (times.len() - 1) as f64;
            f.iter().zip(trapezoid_weights(f.len())).map(|(v, w)| v * w).sum::<f64>() * dt / span
        };
        Ok(Self { times, f, f_int })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "F"])?;
        for (t, f) in self.times.iter().zip(&self.f) {
            wr.serialize((t, f))?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    pub omega: Vec<f64>,
    pub a_raw: Vec<f64>,
    /// Negative parts clipped, then scaled to unit mass under `d omega / 2 pi`.
    pub a_norm: Vec<f64>,
    pub gamma: f64,
}

impl Spectrum {
    /// Clips `a_raw` at zero and normalizes to unit mass on the uniform `omega` grid.
    pub fn from_raw(omega: Vec<f64>, a_raw: Vec<f64>, gamma: f64) -> Result<Self> {
        if omega.len() != a_raw.len() {
            return Err(Error::invalid("omega and amplitudes differ in length"));
        }
        let d_omega = grid_step(&omega, "frequency")?;
        let clipped: Vec<f64> = a_raw.iter().map(|a| a.max(0.0)).collect();
        let mass: f64 = clipped.iter().sum::<f64>() * d_omega / (2.0 * std::f64::consts::PI);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::invalid("spectrum has no positive weight to normalize"));
        }
        Ok(Spectrum {
            omega,
            a_raw,
            a_norm: clipped.iter().map(|a| a / mass).collect(),
            gamma,
        })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["omega", "A_raw", "A_norm"])?;
        for k in 0..self.omega.len() {
            wr.serialize((self.omega[k], self.a_raw[k], self.a_norm[k]))?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// `A(omega) = Re int_0^T dt exp(i omega t - gamma t) S(t)` by the trapezoid rule.
pub fn spectrum(series: &ResponseSeries, gamma: f64, omega: &[f64]) -> Result<Spectrum> {
    if !(gamma > 0.0) {
        return Err(Error::invalid("gamma must be > 0"));
    }
    if series.times.len() != series.s.len() {
        return Err(Error::invalid("response series length mismatch"));
    }
    let dt = grid_step(&series.times, "time")?;
    let n = series.times.len();
    let a_raw: Vec<f64> = omega
        .iter()
        .map(|&w| {
            series
                .times
                .iter()
                .zip(&series.s)
                .zip(trapezoid_weights(n))
                .map(|((&t, &s), wk)| wk * dt * (-gamma * t).exp() * (w * t).cos() * s)
                .sum()
        })
        .collect();
    Spectrum::from_raw(omega.to_vec(), a_raw, gamma)
}

/// Hellinger distance between the normalized spectra, in `[0, 1]`.
pub fn hellinger(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    if a.omega.len() != b.omega.len()
        || a.omega.iter().zip(&b.omega).any(|(x, y)| (x - y).abs() > GRID_TOL * x.abs().max(1.0))
    {
        return Err(Error::invalid("spectra are sampled on different frequency grids"));
    }
    let d_omega = grid_step(&a.omega, "frequency")?;
    let d2: f64 = a
        .a_norm
        .iter()
        .zip(&b.a_norm)
        .map(|(x, y)| (x.sqrt() - y.sqrt()).powi(2))
        .sum::<f64>()
        * 0.5
        * d_omega
        / (2.0 * std::f64::consts::PI);
    Ok(d2.clamp(0.0, 1.0).sqrt())
}
