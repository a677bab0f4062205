//! Library surface of the `psketch` experiment driver; the binary is a
//! thin argument-parsing shell over [`runner::run_experiment`].

pub mod config;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind, InstanceConfig};
pub use runner::{run_experiment, CsvReport};
