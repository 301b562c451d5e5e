//! Experiment orchestration for wavepinn: configuration, training runs,
//! artifacts and cross-run tables.

pub mod aggregate;
pub mod config;
pub mod run;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use aggregate::{aggregate, Table};
pub use config::{IterationUnit, RunConfig, Scale};
pub use run::{run_experiment, run_experiment_with, RunStatus, TrainReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("malformed report {0}")]
    Report(String),
    #[error(transparent)]
    Pde(#[from] wavepinn_core::pde::PdeError),
    #[error(transparent)]
    Network(#[from] wavepinn_core::network::NetworkError),
    #[error(transparent)]
    Loss(#[from] wavepinn_core::loss::LossError),
    #[error(transparent)]
    Optim(#[from] wavepinn_core::optimizer::OptimError),
    #[error(transparent)]
    Metrics(#[from] wavepinn_core::metrics::MetricsError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        HarnessError::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Process exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}
