//! Derivative-free Hamiltonian learning from a target spectrum.
//!
//! Coordinate-wise random local search over the concatenated nonzero couplings
//! and fields: each iteration perturbs one parameter and keeps the move only
//! if the Hellinger distance between the simulated noisy spectrum and the
//! target drops. The noise seed is held fixed across proposals so the
//! objective is a deterministic function of the parameters.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::feedforward::FeedforwardTable;
use crate::hamiltonian::SpinHamiltonian;
use crate::spectroscopy::{hellinger, observe, spectrum, Evolver, NoisyEvolver, Spectrum};
use crate::trotter::{build_trotter_circuit, TimedCircuit};

use super::config::ExperimentConfig;
use super::sweep::SWEEP_RUNS;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InferenceOptions {
    /// Trotter steps per sample time in the simulated spectra.
    pub steps: usize,
    /// Standard deviation of a proposal, rad/ms.
    pub step_size: f64,
    /// Seeds the proposal sequence (the noise seed comes from the config).
    pub search_seed: u64,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        Self {
            steps: 12,
            step_size: 0.25,
            search_seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub accepted: bool,
    /// Hellinger distance of the current (best so far) parameters.
    pub hellinger: f64,
    pub parameters: Vec<f64>,
}

struct Objective<'a> {
    cfg: &'a ExperimentConfig,
    target: &'a Spectrum,
    times: Vec<f64>,
    steps: usize,
    table: Option<Arc<FeedforwardTable>>,
}

impl Objective<'_> {
    fn eval(&self, h: &SpinHamiltonian) -> Result<f64> {
        let evolver = Evolver::Noisy(NoisyEvolver {
            steps: self.steps,
            timing: self.cfg.timing(),
            noise: self.cfg.noise(),
            n_runs: self.cfg.runs_or(SWEEP_RUNS),
            feedforward: self.table.clone(),
        });
        let obs = observe(h, &evolver, &self.times)?;
        match spectrum(&obs.response, self.cfg.spectrum.gamma, &self.target.omega) {
            Ok(sp) => hellinger(&sp, self.target),
            // no positive weight anywhere: as far from the target as possible
            Err(Error::InvalidArgument(_)) => Ok(1.0),
            Err(e) => Err(e),
        }
    }
}

/// Feedforward table with head-room for parameters drifting during the search.
fn search_table(cfg: &ExperimentConfig, h: &SpinHamiltonian, times: &[f64], steps: usize) -> Result<Option<Arc<FeedforwardTable>>> {
    if !cfg.feedforward || cfg.c2 == 0.0 {
        return Ok(None);
    }
    let t_max = times[times.len() - 1];
    let circuit: TimedCircuit = build_trotter_circuit(h, t_max, steps, &cfg.timing())?;
    let (phi, lambda) = crate::feedforward::circuit_extent(&circuit, cfg.c2);
    let table = FeedforwardTable::build(2.0 * phi + 0.1, lambda, cfg.phi_cap)?;
    Ok(Some(Arc::new(table)))
}

/// Runs `iterations` proposals from `initial`; record 0 is the initial evaluation.
pub fn run_inference_demo(
    target: &Spectrum,
    initial: &SpinHamiltonian,
    iterations: usize,
    cfg: &ExperimentConfig,
    opts: &InferenceOptions,
) -> Result<Vec<IterationRecord>> {
    cfg.validate()?;
    if opts.steps == 0 {
        return Err(Error::invalid("inference needs at least one Trotter step"));
    }
    if !(opts.step_size > 0.0) {
        return Err(Error::invalid("step_size must be > 0"));
    }
    let times = cfg.spectrum.times();
    let objective = Objective {
        cfg,
        target,
        table: search_table(cfg, initial, &times, opts.steps)?,
        times,
        steps: opts.steps,
    };
    let mut params = initial.parameters();
    let mut current = initial.clone();
    let mut best = objective.eval(&current)?;
    let mut log = vec![IterationRecord {
        iteration: 0,
        accepted: true,
        hellinger: best,
        parameters: params.clone(),
    }];
    if params.is_empty() {
        return Ok(log);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.search_seed);
    let normal = Normal::new(0.0, opts.step_size).map_err(|e| Error::invalid(e.to_string()))?;
    for it in 1..=iterations {
        let k = (it - 1) % params.len();
        let mut trial = params.clone();
        trial[k] += normal.sample(&mut rng);
        let candidate = current.with_parameters(&trial)?;
        let d = objective.eval(&candidate)?;
        let accepted = d < best;
        if accepted {
            best = d;
            params = trial;
            current = candidate;
        }
        log.push(IterationRecord {
            iteration: it,
            accepted,
            hellinger: best,
            parameters: params.clone(),
        });
    }
    Ok(log)
}

/// Copy of `h` with every nonzero parameter shifted by `N(0, scale)`.
pub fn perturbed_instance(h: &SpinHamiltonian, scale: f64, seed: u64) -> Result<SpinHamiltonian> {
    let normal = Normal::new(0.0, scale).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p: Vec<f64> = h.parameters().iter().map(|v| v + normal.sample(&mut rng)).collect();
    h.with_parameters(&p)
}
