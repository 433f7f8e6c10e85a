//! Experiment runner and analysis pipeline for the auction and newsvendor
//! harness.

pub mod analyze;
pub mod config;
pub mod error;
pub mod humans;
pub mod ingest;
pub mod manifest;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
