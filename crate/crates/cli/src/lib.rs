//! Command-line plumbing for the seqformer forecaster: data preparation,
//! training, evaluation, prediction, ranking and footprint reports.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ModelOverrides, RunConfig};
pub use error::{CliError, CliResult};
