//! Experiment runner for the KLJN laboratory: configuration, Monte Carlo
//! campaigns, parameter sweeps, report files and the acceptance suite.

pub mod acceptance;
pub mod campaign;
pub mod config;
pub mod error;
pub mod output;

pub use campaign::{run_campaign, Campaign};
pub use config::{ExperimentConfig, Scenario, SweepParameter};
pub use error::{CliError, CliResult};
