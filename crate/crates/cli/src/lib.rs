//! Experiment harness for the shiftlab distribution-shift laboratory.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::ExperimentConfig;
pub use error::CliError;
