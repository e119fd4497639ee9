//! Experiment runner for particle-number-conserving random circuit
//! benchmarking: configuration, parallel scheduling and result files.

pub mod config;
pub mod emit;
pub mod error;
pub mod experiment;

pub use config::{ExperimentConfig, Mode, Overrides, Resolved};
pub use emit::emit;
pub use error::{HarnessError, Result};
pub use experiment::{run, ExperimentResult};
