//! Batch front end for `mmf`: config parsing, the four commands and
//! SVG heatmaps.

pub mod commands;
pub mod config;
mod error;
pub mod svg;

use std::path::Path;

pub use config::{Overrides, RunConfig, ZSource};
pub use error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Fit,
    Summarize,
    Diagnose,
}

/// Worker cap from `MMF_THREADS`, defaulting to the available cores.
pub fn threads_from_env() -> Result<usize, CliError> {
    match std::env::var("MMF_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(CliError::Validation(format!("MMF_THREADS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn run(command: Command, config: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply(overrides);
    match command {
        Command::Simulate => commands::cmd_simulate(&cfg),
        Command::Fit => commands::cmd_fit(&cfg, threads_from_env()?),
        Command::Summarize => commands::cmd_summarize(&cfg),
        Command::Diagnose => commands::cmd_diagnose(&cfg),
    }
}
