//! Experiment orchestration: configs, depth sweeps, the inference demo and the CLI.

pub mod cli;
pub mod config;
pub mod inference;
pub mod sweep;

pub use cli::cli_main;
pub use config::{default_hamiltonian, random_instance, ExperimentConfig, HamiltonianSource, SpectrumConfig};
pub use inference::{perturbed_instance, run_inference_demo, InferenceOptions, IterationRecord};
pub use sweep::{run_depth_sweep, DepthRecord, SweepResult};
