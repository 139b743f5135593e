//! Trotterized spin-model simulation for trapped-ion quantum simulators with
//! motional-heating gate noise, calibration and feedforward correction.

pub mod calibration;
pub mod error;
pub mod feedforward;
pub mod hamiltonian;
pub mod harness;
pub mod motional_noise;
pub mod spectroscopy;
pub mod spinsim;
pub mod trotter;

pub use error::{Error, Result};
