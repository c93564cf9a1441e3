//! Experiment orchestration for the `osnr` command-line tool.

pub mod config;
pub mod drivers;
pub mod error;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
pub use runner::{run_dataset, RunSummary};
