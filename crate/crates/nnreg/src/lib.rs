//! Experiment runner for `nnreg-core`: configuration files, problem bundles,
//! CSV/JSON reports and the `synth`/`solve`/`compare`/`rates` commands.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use bundle::Bundle;
pub use commands::{cmd_compare, cmd_rates, cmd_solve, cmd_synth, CompareRow, RunOptions, SolveReport};
pub use config::ExperimentConfig;
pub use error::{Category, CliError};
