use std::path::{Path, PathBuf};

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SpinHamiltonian;
use crate::motional_noise::NoiseParams;
use crate::spectroscopy::uniform_grid;
use crate::trotter::{GateTiming, DEFAULT_GATE_DURATION_MS};

/// Seed the default 4-spin fixture was drawn with.
pub const FIXTURE_SEED: u64 = 20_200_721;

/// Checked-in default instance, see [`random_instance`].
pub const DEFAULT_FIXTURE_JSON: &str = include_str!("../../fixtures/default_4spin.json");

pub fn default_hamiltonian() -> SpinHamiltonian {
    SpinHamiltonian::from_json_str(DEFAULT_FIXTURE_JSON).expect("bundled fixture is valid")
}

/// All-to-all instance with `J_ij ~ U[-1, 1]` and `h_i ~ U[-5, 5]` rad/ms.
pub fn random_instance(n: usize, seed: u64) -> Result<SpinHamiltonian> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uj = Uniform::new_inclusive(-1.0, 1.0);
    let uh = Uniform::new_inclusive(-5.0, 5.0);
    let mut couplings = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = uj.sample(&mut rng);
            couplings[i][j] = v;
            couplings[j][i] = v;
        }
    }
    let fields = (0..n).map(|_| uh.sample(&mut rng)).collect();
    SpinHamiltonian::new(couplings, fields)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HamiltonianSource {
    File { file: PathBuf },
    Inline(SpinHamiltonian),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Damping rate, rad/ms.
    pub gamma: f64,
    /// Last sample time, ms.
    pub t_max: f64,
    pub n_t: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        let t_max = 3.0;
        Self {
            gamma: 3.0 / t_max,
            t_max,
            n_t: 41,
            omega_min: 0.0,
            omega_max: 15.0,
            n_omega: 301,
        }
    }
}

impl SpectrumConfig {
    pub fn times(&self) -> Vec<f64> {
        uniform_grid(0.0, self.t_max, self.n_t)
    }

    pub fn omega(&self) -> Vec<f64> {
        uniform_grid(self.omega_min, self.omega_max, self.n_omega)
    }

    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::config("spectrum.gamma", "must be > 0"));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::config("spectrum.t_max", "must be > 0"));
        }
        if self.n_t < 2 {
            return Err(Error::config("spectrum.n_t", "must be >= 2"));
        }
        if !(self.omega_max > self.omega_min) {
            return Err(Error::config("spectrum.omega_max", "must exceed omega_min"));
        }
        if self.n_omega < 2 {
            return Err(Error::config("spectrum.n_omega", "must be >= 2"));
        }
        Ok(())
    }
}

fn default_steps() -> Vec<usize> {
    vec![3, 4, 5, 6, 8, 10, 12, 14, 17, 20, 24, 28, 33, 39, 46, 56]
}

fn default_gate_duration() -> f64 {
    DEFAULT_GATE_DURATION_MS
}

fn default_true() -> bool {
    true
}

fn default_phi_cap() -> f64 {
    crate::feedforward::DEFAULT_PHI_CAP
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Defaults to the bundled 4-spin fixture.
    #[serde(default)]
    pub hamiltonian: Option<HamiltonianSource>,
    /// Heating rate, 1/ms.
    #[serde(default)]
    pub c2: f64,
    /// Gate duration `t_g`, ms.
    #[serde(default = "default_gate_duration")]
    pub gate_duration: f64,
    /// Trotter steps per sample time to sweep.
    #[serde(default = "default_steps")]
    pub steps: Vec<usize>,
    /// Trajectories per time sample; 10 for sweeps and 40 for spectra when unset.
    #[serde(default)]
    pub n_runs: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub feedforward: bool,
    #[serde(default = "default_true")]
    pub correlated: bool,
    /// Also apply motional noise to single-qubit rotations.
    #[serde(default)]
    pub single_qubit_noise: bool,
    #[serde(default = "default_phi_cap")]
    pub phi_cap: f64,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    /// Where results go; not part of the experiment identity, so never serialized.
    #[serde(default = "default_output", skip_serializing)]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    /// Parses and validates; relative hamiltonian paths resolve against `base_dir`.
    pub fn from_json_str(s: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(s).map_err(|e| Error::config("<root>", e.to_string()))?;
        if let Some(HamiltonianSource::File { file }) = &mut cfg.hamiltonian {
            if file.is_relative() {
                *file = base_dir.join(&*file);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c2 >= 0.0) || !self.c2.is_finite() {
            return Err(Error::config("c2", "must be finite and >= 0"));
        }
        if !(self.gate_duration > 0.0) || !self.gate_duration.is_finite() {
            return Err(Error::config("gate_duration", "must be > 0"));
        }
        if self.steps.is_empty() || self.steps.contains(&0) {
            return Err(Error::config("steps", "must be a non-empty list of positive integers"));
        }
        if self.n_runs == Some(0) {
            return Err(Error::config("n_runs", "must be >= 1"));
        }
        if !(self.phi_cap > 0.0) || !self.phi_cap.is_finite() {
            return Err(Error::config("phi_cap", "must be > 0"));
        }
        self.spectrum.validate()?;
        if let Some(HamiltonianSource::File { file }) = &self.hamiltonian {
            if !file.is_file() {
                return Err(Error::config("hamiltonian.file", format!("{} does not exist", file.display())));
            }
        }
        self.hamiltonian()?;
        Ok(())
    }

    pub fn hamiltonian(&self) -> Result<SpinHamiltonian> {
        match &self.hamiltonian {
            None => Ok(default_hamiltonian()),
            Some(HamiltonianSource::Inline(h)) => h
                .validate()
                .map(|_| h.clone())
                .map_err(|e| Error::config("hamiltonian", e.to_string())),
            Some(HamiltonianSource::File { file }) => SpinHamiltonian::from_json_file(file)
                .map_err(|e| Error::config("hamiltonian.file", e.to_string())),
        }
    }

    pub fn timing(&self) -> GateTiming {
        let t = GateTiming {
            gate_duration: self.gate_duration,
            ..GateTiming::default()
        };
        if self.single_qubit_noise {
            t.with_single_qubit_noise()
        } else {
            t
        }
    }

    pub fn runs_or(&self, default: usize) -> usize {
        self.n_runs.unwrap_or(default)
    }

    pub fn noise(&self) -> NoiseParams {
        NoiseParams {
            c2: self.c2,
            seed: self.seed,
            correlated: self.correlated,
        }
    }
}
