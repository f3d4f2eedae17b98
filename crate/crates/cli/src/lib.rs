//! Experiment runner for the skywatch simulator: config loading and the
//! stages behind each `skywatch` subcommand.

pub mod commands;
pub mod config;
pub mod crime_runs;
pub mod di_runs;

pub use commands::{exit_code, run, Cli, Command};
pub use config::ExperimentConfig;
