use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::calibration::{fit_c2, fit_phase_damping, simulate_calibration, CalibrationCurve};
use crate::error::{Error, Result};
use crate::feedforward::{optimal_input_angle, ControlQuery};
use crate::motional_noise::{
    angle_correlation, derive_seed, noisy_angle, sample_trajectory, AngleDistribution, NoiseParams,
};
use crate::spectroscopy::{hellinger, observe, spectrum, uniform_grid, Evolver, NoisyEvolver};

use super::config::{ExperimentConfig, HamiltonianSource};
use super::inference::{perturbed_instance, run_inference_demo, InferenceOptions};
use super::sweep::{run_depth_sweep, sweep_table};

/// Overrides the seed from the config file (an explicit `--seed` wins).
pub const SEED_ENV: &str = "IONCODESIGN_SEED";

/// Trajectories per time sample for single spectra when the config leaves it unset.
pub const SPECTRUM_RUNS: usize = 40;

#[derive(Parser, Debug)]
#[command(name = "ioncodesign", version, about = "Trotterized trapped-ion simulation under motional gate noise")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Heating rate constant, 1/ms.
    #[arg(long, allow_negative_numbers = true)]
    c2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Trajectories per time sample.
    #[arg(long)]
    runs: Option<usize>,
    /// Enable (or with `=false` disable) feedforward angle correction.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    feedforward: Option<bool>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Noisy response function and spectrum against exact evolution.
    SimulateSpectrum {
        #[command(flatten)]
        common: Common,
        /// Trotter steps per sample time (defaults to the last entry of `steps`).
        #[arg(long)]
        steps: Option<usize>,
    },
    /// F_int and Hellinger distance versus Trotter step count.
    DepthSweep {
        #[command(flatten)]
        common: Common,
    },
    /// Synthetic return-probability calibration and c2 fit.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        shots: u64,
        /// Requested XX angles, rad.
        #[arg(long, value_delimiter = ',')]
        phi: Option<Vec<f64>>,
        /// Wait times, ms.
        #[arg(long, value_delimiter = ',')]
        tau: Option<Vec<f64>>,
        /// Fit an existing calibration CSV instead of simulating one.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Optimal input angles over a (phi_p, lambda) grid.
    FeedforwardTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4.0 * std::f64::consts::PI)]
        phi_max: f64,
        #[arg(long, default_value_t = 50)]
        n_phi: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.5,1,1.5,2")]
        lambda: Vec<f64>,
    },
    /// Analytic gate-angle moments and correlations beside Monte Carlo estimates.
    NoiseStats {
        #[command(flatten)]
        common: Common,
        /// Time of the first gate, ms.
        #[arg(long)]
        tau: f64,
        /// Requested angle, rad.
        #[arg(long, default_value_t = std::f64::consts::FRAC_PI_2)]
        phi_in: f64,
        /// Separations to the second gate, ms.
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,50")]
        delta: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Local-search Hamiltonian learning from the exact spectrum.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long, default_value_t = 12)]
        steps: usize,
        /// Spread of the initial guess around the true parameters, rad/ms.
        #[arg(long, default_value_t = 0.5)]
        perturbation: f64,
    },
}

#[derive(Serialize)]
struct FileDigest {
    name: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a ExperimentConfig,
    files: Vec<FileDigest>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects output files, then writes them plus a manifest in one go.
struct Output {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn new(dir: PathBuf) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    fn add_with(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.add(name, buf);
        Ok(())
    }

    fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }

    fn finish(self, command: &str, cfg: &ExperimentConfig) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let mut digests = Vec::new();
        for (name, bytes) in &self.files {
            fs::write(self.dir.join(name), bytes)?;
            digests.push(FileDigest {
                name: name.clone(),
                sha256: hex_digest(bytes),
            });
        }
        // The Hamiltonian is recorded inline so the hash does not depend on file paths.
        let recorded = ExperimentConfig {
            hamiltonian: Some(HamiltonianSource::Inline(cfg.hamiltonian()?)),
            ..cfg.clone()
        };
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: cfg.seed,
            config_sha256: hex_digest(&serde_json::to_vec(&recorded)?),
            config: &recorded,
            files: digests,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        fs::write(self.dir.join("manifest.json"), bytes)?;
        Ok(())
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::config(SEED_ENV, format!("not an unsigned integer: {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Config file (or defaults) with env and flag overrides applied, then validated.
fn effective_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = env_seed()? {
        cfg.seed = seed;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(c2) = common.c2 {
        cfg.c2 = c2;
    }
    if let Some(runs) = common.runs {
        cfg.n_runs = Some(runs);
    }
    if let Some(ff) = common.feedforward {
        cfg.feedforward = ff;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn csv_rows<W: Write, R: Serialize>(w: W, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(header)?;
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

fn simulate_spectrum(common: &Common, steps: Option<usize>) -> Result<()> {
    let cfg = effective_config(common)?;
    let h = cfg.hamiltonian()?;
    let steps = steps.unwrap_or(cfg.steps[cfg.steps.len() - 1]);
    if steps == 0 {
        return Err(Error::config("--steps", "must be >= 1"));
    }
    let times = cfg.spectrum.times();
    let omega = cfg.spectrum.omega();
    let table = sweep_table(&cfg, &h, &times, &[steps])?;
    let evolver = Evolver::Noisy(NoisyEvolver {
        steps,
        timing: cfg.timing(),
        noise: cfg.noise(),
        n_runs: cfg.runs_or(SPECTRUM_RUNS),
        feedforward: table,
    });
    let exact = observe(&h, &Evolver::Exact, &times)?;
    let noisy = observe(&h, &evolver, &times)?;
    let a_exact = spectrum(&exact.response, cfg.spectrum.gamma, &omega)?;
    let a_noisy = spectrum(&noisy.response, cfg.spectrum.gamma, &omega)?;
    let d_h = hellinger(&a_noisy, &a_exact)?;

    let mut out = Output::new(cfg.output_dir.clone());
    out.add_with("response.csv", |b| noisy.response.write_csv(b))?;
    out.add_with("response_exact.csv", |b| exact.response.write_csv(b))?;
    out.add_with("spectrum.csv", |b| a_noisy.write_csv(b))?;
    out.add_with("spectrum_exact.csv", |b| a_exact.write_csv(b))?;
    out.add_with("fidelity.csv", |b| noisy.fidelity.write_csv(b))?;
    #[derive(Serialize)]
    struct Summary {
        steps: usize,
        hellinger: f64,
        f_int: f64,
    }
    out.add_json(
        "summary.json",
        &Summary {
            steps,
            hellinger: d_h,
            f_int: noisy.fidelity.f_int,
        },
    )?;
    out.finish("simulate-spectrum", &cfg)?;
    println!("steps={steps} hellinger={d_h:.6} f_int={:.6}", noisy.fidelity.f_int);
    Ok(())
}

fn depth_sweep(common: &Common) -> Result<()> {
    let cfg = effective_config(common)?;
    let res = run_depth_sweep(&cfg)?;
    let mut out = Output::new(cfg.output_dir.clone());
    out.add_json("sweep.json", &res)?;
    out.add_with("sweep.csv", |b| {
        csv_rows(
            b,
            &["steps", "gates_total", "gates_two_qubit", "f_int", "hellinger"],
            res.records.iter().map(|r| {
                (r.steps, r.gate_counts.total, r.gate_counts.two_qubit, r.f_int, r.hellinger)
            }),
        )
    })?;
    if let Some(exact) = &res.exact_spectrum {
        out.add_with("spectrum_exact.csv", |b| exact.write_csv(b))?;
    }
    for (k, rec) in res.records.iter().enumerate() {
        out.add_with(format!("fidelity_r{}.csv", rec.steps), |b| res.traces[k].write_csv(b))?;
        out.add_with(format!("spectrum_r{}.csv", rec.steps), |b| res.spectra[k].write_csv(b))?;
    }
    out.finish("depth-sweep", &cfg)?;
    println!(
        "r_opt_by_fint={} (F_int={:.6}) r_opt_by_dh={} (D_H={:.6})",
        res.r_opt_by_fint,
        res.best_f_int(),
        res.r_opt_by_dh,
        res.best_hellinger()
    );
    Ok(())
}

fn calibrate(
    common: &Common,
    shots: u64,
    phi: Option<Vec<f64>>,
    tau: Option<Vec<f64>>,
    input: Option<PathBuf>,
) -> Result<()> {
    use std::f64::consts::PI;
    let cfg = effective_config(common)?;
    let curve = match input {
        Some(path) => {
            let f = fs::File::open(&path).map_err(|e| Error::config("--input", format!("{}: {e}", path.display())))?;
            CalibrationCurve::read_csv(f)?
        }
        None => {
            if shots == 0 {
                return Err(Error::config("--shots", "must be >= 1"));
            }
            let phi = phi.unwrap_or_else(|| vec![PI / 2.0, PI, 1.5 * PI, 2.0 * PI]);
            let tau = tau.unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0]);
            simulate_calibration(&phi, &tau, cfg.c2, shots, cfg.seed)?
        }
    };
    let fit = fit_c2(&curve)?;
    let reference = fit_phase_damping(&curve)?;
    #[derive(Serialize)]
    struct Report<'a> {
        c2_true: f64,
        c2_hat: f64,
        residual: f64,
        phase_damping: &'a crate::calibration::PhaseDampingFit,
    }
    let mut out = Output::new(cfg.output_dir.clone());
    out.add_with("calibration.csv", |b| curve.write_csv(b))?;
    out.add_json(
        "fit.json",
        &Report {
            c2_true: cfg.c2,
            c2_hat: fit.c2_hat,
            residual: fit.residual,
            phase_damping: &reference,
        },
    )?;
    out.finish("calibrate", &cfg)?;
    println!(
        "c2_hat={:.6} residual={:.3e} phase_damping_residual={:.3e}",
        fit.c2_hat, fit.residual, reference.residual
    );
    Ok(())
}

fn feedforward_table(common: &Common, phi_max: f64, n_phi: usize, lambdas: &[f64]) -> Result<()> {
    let cfg = effective_config(common)?;
    if !(phi_max > 0.0) || n_phi < 2 {
        return Err(Error::config("--phi-max/--n-phi", "need phi_max > 0 and n_phi >= 2"));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::config("--lambda", "values must be >= 0"));
    }
    let phis = uniform_grid(0.0, phi_max, n_phi);
    let mut rows = Vec::new();
    for &lambda in lambdas {
        for &phi_p in &phis {
            let o = optimal_input_angle(&ControlQuery {
                phi_p,
                lambda,
                phi_cap: cfg.phi_cap,
            })?;
            rows.push((phi_p, lambda, o.phi_in, o.fidelity));
        }
    }
    let mut out = Output::new(cfg.output_dir.clone());
    out.add_with("feedforward_table.csv", |b| {
        csv_rows(b, &["phi_p", "lambda", "phi_in_star", "fidelity_star"], rows.iter().copied())
    })?;
    out.finish("feedforward-table", &cfg)?;
    println!("{} (phi_p, lambda) points written", rows.len());
    Ok(())
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (m, xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

fn noise_stats(common: &Common, tau: f64, phi_in: f64, deltas: &[f64], samples: usize) -> Result<()> {
    let cfg = effective_config(common)?;
    if !(tau > 0.0) {
        return Err(Error::config("--tau", "must be > 0"));
    }
    if samples < 2 || deltas.iter().any(|d| !(*d >= 0.0)) {
        return Err(Error::config("--samples/--delta", "need samples >= 2 and delta >= 0"));
    }
    let lambda = cfg.c2 * tau;
    let mut rows: Vec<(String, f64, f64, f64)> = Vec::new();
    let first: Vec<Vec<f64>> = (0..samples)
        .map(|k| -> Result<Vec<f64>> {
            let mut times = vec![tau];
            times.extend(deltas.iter().map(|d| tau + d));
            let params = NoiseParams {
                seed: derive_seed(cfg.seed, &[k as u64]),
                ..cfg.noise()
            };
            let traj = sample_trajectory(&times, &params)?;
            Ok(traj.u.iter().map(|&u| noisy_angle(phi_in, u)).collect())
        })
        .collect::<Result<_>>()?;
    let at_tau: Vec<f64> = first.iter().map(|v| v[0]).collect();
    let (m, v) = mean_var(&at_tau);
    let n = samples as f64;
    if lambda > 0.0 {
        let moments = AngleDistribution::new(phi_in, lambda)?.moments();
        rows.push(("mean".into(), moments.mean, m, (v / n).sqrt()));
        rows.push(("variance".into(), moments.variance, v, v * (2.0 / (n - 1.0)).sqrt()));
        let logs: Vec<f64> = at_tau.iter().map(|p| p.ln()).collect();
        let (ml, vl) = mean_var(&logs);
        rows.push(("typical".into(), moments.typical, ml.exp(), ml.exp() * (vl / n).sqrt()));
    } else {
        rows.push(("mean".into(), phi_in, m, (v / n).sqrt()));
        rows.push(("variance".into(), 0.0, v, 0.0));
    }
    for (j, &d) in deltas.iter().enumerate() {
        let later: Vec<f64> = first.iter().map(|s| s[j + 1]).collect();
        let (m2, v2) = mean_var(&later);
        let cov = at_tau.iter().zip(&later).map(|(a, b)| (a - m) * (b - m2)).sum::<f64>() / (n - 1.0);
        let corr = cov / (v * v2).sqrt();
        let analytic = if cfg.c2 > 0.0 { angle_correlation(tau, d, cfg.c2)? } else { f64::NAN };
        rows.push((format!("correlation_delta_{d}"), analytic, corr, (1.0 - corr * corr) / n.sqrt()));
    }
    let mut out = Output::new(cfg.output_dir.clone());
    out.add_with("noise_stats.csv", |b| {
        csv_rows(b, &["quantity", "analytic", "monte_carlo", "std_error"], rows.iter().cloned())
    })?;
    out.finish("noise-stats", &cfg)?;
    for (q, a, mc, se) in &rows {
        println!("{q:>24}  analytic={a:.6}  monte_carlo={mc:.6}  se={se:.2e}");
    }
    Ok(())
}

fn infer(common: &Common, iterations: usize, steps: usize, perturbation: f64) -> Result<()> {
    let cfg = effective_config(common)?;
    if steps == 0 || !(perturbation >= 0.0) {
        return Err(Error::config("--steps/--perturbation", "need steps >= 1 and perturbation >= 0"));
    }
    let truth = cfg.hamiltonian()?;
    let times = cfg.spectrum.times();
    let exact = observe(&truth, &Evolver::Exact, &times)?;
    let target = spectrum(&exact.response, cfg.spectrum.gamma, &cfg.spectrum.omega())?;
    let initial = if perturbation > 0.0 {
        perturbed_instance(&truth, perturbation, derive_seed(cfg.seed, &[1]))?
    } else {
        truth.clone()
    };
    let opts = InferenceOptions {
        steps,
        search_seed: derive_seed(cfg.seed, &[2]),
        ..InferenceOptions::default()
    };
    let log = run_inference_demo(&target, &initial, iterations, &cfg, &opts)?;
    let n_params = truth.parameters().len();
    let mut out = Output::new(cfg.output_dir.clone());
    out.add_with("inference.csv", |b| {
        let mut wr = csv::Writer::from_writer(b);
        let mut header = vec!["iteration".to_string(), "accepted".into(), "hellinger".into()];
        header.extend((0..n_params).map(|k| format!("p{k}")));
        wr.write_record(&header)?;
        for rec in &log {
            let mut row = vec![rec.iteration.to_string(), rec.accepted.to_string(), rec.hellinger.to_string()];
            row.extend(rec.parameters.iter().map(f64::to_string));
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    })?;
    out.add_json("truth.json", &truth)?;
    out.finish("infer", &cfg)?;
    let last = log.last().map_or(f64::NAN, |r| r.hellinger);
    println!("initial D_H={:.6} final D_H={last:.6}", log[0].hellinger);
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::SimulateSpectrum { common, steps } => simulate_spectrum(&common, steps),
        Command::DepthSweep { common } => depth_sweep(&common),
        Command::Calibrate {
            common,
            shots,
            phi,
            tau,
            input,
        } => calibrate(&common, shots, phi, tau, input),
        Command::FeedforwardTable {
            common,
            phi_max,
            n_phi,
            lambda,
        } => feedforward_table(&common, phi_max, n_phi, &lambda),
        Command::NoiseStats {
            common,
            tau,
            phi_in,
            delta,
            samples,
        } => noise_stats(&common, tau, phi_in, &delta, samples),
        Command::Infer {
            common,
            iterations,
            steps,
            perturbation,
        } => infer(&common, iterations, steps, perturbation),
    }
}

/// Parses `argv` (program name first) and runs the subcommand.
///
/// Exit codes: 0 success, 2 usage or config error, 1 runtime error.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
