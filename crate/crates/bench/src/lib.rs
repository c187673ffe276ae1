//! Experiment harness for `linuct`: config loading, seeded runs over
//! matrix games, regret analytics and result files.

pub mod config;
pub mod records;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, OutputFormat, RunMode};
pub use records::{ResultFile, StepRecord};
pub use report::{bound_value, summarize, RegretReport, SummaryRow};
pub use runner::{run, run_cell, CellResult};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed results: {0}")]
    Format(String),
    #[error(transparent)]
    Core(#[from] linuct::Error),
}

impl HarnessError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
