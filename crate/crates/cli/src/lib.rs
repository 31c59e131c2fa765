//! Experiment commands for the hcascade detection cascade.

pub mod commands;
pub mod config;
pub mod error;
pub mod json17;
pub mod serve;

pub use commands::{cmd_errormodel, cmd_run, cmd_synth, report_from_trace, RunReport, RunTrace};
pub use error::{CliError, CliResult};
