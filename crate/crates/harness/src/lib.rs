//! Experiment registry, configuration and command-line driver.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod records;
pub mod setup;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("unknown experiment `{0}`; known: {}", experiments::IDS.join(", "))]
    UnknownExperiment(String),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Potential(#[from] fluctfield_core::potentials::PotentialError),
    #[error(transparent)]
    Configuration(#[from] fluctfield_core::configuration::ConfigError),
    #[error(transparent)]
    Gibbs(#[from] fluctfield_core::gibbs::GibbsError),
    #[error(transparent)]
    Oracle(#[from] fluctfield_core::oracle::OracleError),
    #[error(transparent)]
    Langevin(#[from] fluctfield_core::langevin::LangevinError),
    #[error(transparent)]
    Scaling(#[from] fluctfield_core::scaling::ScalingError),
    #[error(transparent)]
    Expansion(#[from] fluctfield_core::expansion::ExpansionError),
    #[error(transparent)]
    Ou(#[from] fluctfield_core::oulimit::OuError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// 2 for problems with the invocation or config, 1 for failed runs.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::UnknownExperiment(_) | HarnessError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
