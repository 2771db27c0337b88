//! Batch front end for ergodic-decomposition experiments.
//!
//! A run reads an [`ExperimentConfig`], executes one command over every
//! experiment in it and writes CSV/JSON (and optionally SVG) files into an
//! output directory together with an echo of the effective config.

pub mod config;
mod output;
pub mod run;
mod svg;

pub use config::{Check, Experiment, ExperimentConfig, PointSpec, WitnessSpec};
pub use run::{run, Command, Outcome, RunOptions};

/// Process exit codes.
pub mod exit {
    pub const PASS: u8 = 0;
    pub const CHECK_FAILED: u8 = 1;
    pub const CONFIG_ERROR: u8 = 2;
    pub const DECOMPOSITION_FAILED: u8 = 3;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ergodec_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Csv(_) => exit::CONFIG_ERROR,
            CliError::Core(ergodec_core::Error::DecompositionFailed(_)) => {
                exit::DECOMPOSITION_FAILED
            }
            _ => exit::CHECK_FAILED,
        }
    }
}
