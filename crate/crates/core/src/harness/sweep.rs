use std::sync::Arc;

use serde::Serialize;

use crate::error::Result;
use crate::feedforward::FeedforwardTable;
use crate::hamiltonian::SpinHamiltonian;
use crate::spectroscopy::{
    feedforward_table_for, hellinger, observe, spectrum, Evolver, FidelityTrace, NoisyEvolver, ResponseSeries,
    Spectrum,
};
use crate::trotter::{build_trotter_circuit, gate_counts, GateCounts};

use super::config::ExperimentConfig;

/// Trajectories per time sample for sweeps when the config leaves it unset.
pub const SWEEP_RUNS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthRecord {
    pub steps: usize,
    /// Gates in the circuit for the longest sample time.
    pub gate_counts: GateCounts,
    pub f_int: f64,
    /// Hellinger distance to the exact-evolution spectrum.
    pub hellinger: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub c2: f64,
    pub feedforward: bool,
    pub n_runs: usize,
    pub records: Vec<DepthRecord>,
    pub r_opt_by_fint: usize,
    pub r_opt_by_dh: usize,
    #[serde(skip)]
    pub traces: Vec<FidelityTrace>,
    #[serde(skip)]
    pub responses: Vec<ResponseSeries>,
    #[serde(skip)]
    pub spectra: Vec<Spectrum>,
    #[serde(skip)]
    pub exact_spectrum: Option<Spectrum>,
}

impl SweepResult {
    pub fn record(&self, steps: usize) -> Option<&DepthRecord> {
        self.records.iter().find(|r| r.steps == steps)
    }

    pub fn best_f_int(&self) -> f64 {
        self.records.iter().map(|r| r.f_int).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn best_hellinger(&self) -> f64 {
        self.records.iter().map(|r| r.hellinger).fold(f64::INFINITY, f64::min)
    }
}

/// Feedforward table covering every circuit of a sweep, when one is needed.
pub(crate) fn sweep_table(
    cfg: &ExperimentConfig,
    h: &SpinHamiltonian,
    times: &[f64],
    steps: &[usize],
) -> Result<Option<Arc<FeedforwardTable>>> {
    if !cfg.feedforward || cfg.c2 == 0.0 {
        return Ok(None);
    }
    feedforward_table_for(h, times, steps, &cfg.timing(), cfg.c2, cfg.phi_cap).map(|t| Some(Arc::new(t)))
}

/// Evaluates `F_int` and the spectral Hellinger distance for every step count
/// in `cfg.steps`. Ties in either optimum go to the smaller step count.
pub fn run_depth_sweep(cfg: &ExperimentConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let h = cfg.hamiltonian()?;
    let times = cfg.spectrum.times();
    let omega = cfg.spectrum.omega();
    let gamma = cfg.spectrum.gamma;
    let n_runs = cfg.runs_or(SWEEP_RUNS);
    let timing = cfg.timing();
    let exact = observe(&h, &Evolver::Exact, &times)?;
    let exact_spectrum = spectrum(&exact.response, gamma, &omega)?;
    let table = sweep_table(cfg, &h, &times, &cfg.steps)?;
    let t_max = times[times.len() - 1];

    let mut result = SweepResult {
        c2: cfg.c2,
        feedforward: cfg.feedforward,
        n_runs,
        records: Vec::with_capacity(cfg.steps.len()),
        r_opt_by_fint: cfg.steps[0],
        r_opt_by_dh: cfg.steps[0],
        traces: Vec::new(),
        responses: Vec::new(),
        spectra: Vec::new(),
        exact_spectrum: Some(exact_spectrum.clone()),
    };
    for &steps in &cfg.steps {
        let evolver = Evolver::Noisy(NoisyEvolver {
            steps,
            timing: timing.clone(),
            noise: cfg.noise(),
            n_runs,
            feedforward: table.clone(),
        });
        let obs = observe(&h, &evolver, &times)?;
        let sp = spectrum(&obs.response, gamma, &omega)?;
        result.records.push(DepthRecord {
            steps,
            gate_counts: gate_counts(&build_trotter_circuit(&h, t_max, steps, &timing)?),
            f_int: obs.fidelity.f_int,
            hellinger: hellinger(&sp, &exact_spectrum)?,
        });
        result.traces.push(obs.fidelity);
        result.responses.push(obs.response);
        result.spectra.push(sp);
    }
    let best = |better: &dyn Fn(&DepthRecord, &DepthRecord) -> bool| {
        result
            .records
            .iter()
            .fold(&result.records[0], |b, r| if better(r, b) || (!better(b, r) && r.steps < b.steps) { r } else { b })
            .steps
    };
    let r_fint = best(&|a, b| a.f_int > b.f_int);
    let r_dh = best(&|a, b| a.hellinger < b.hellinger);
    result.r_opt_by_fint = r_fint;
    result.r_opt_by_dh = r_dh;
    Ok(result)
}
