//! Experiment runner for the `tfluct` command: flat TOML configs, seeded
//! runs, CSV replicate tables and JSON result records.

pub mod commands;
pub mod config;

pub use commands::{run, Outcome, ResultRecord};
pub use config::{Command, ExperimentConfig};
