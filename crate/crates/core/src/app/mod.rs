//! Command-line front end: configuration, output files and the
//! verification runners.

pub mod cli;
pub mod config;
pub mod io;
pub mod run;
pub mod verify;

use thiserror::Error;

use crate::declab::DeclabError;
use crate::mms::MmsError;
use crate::stepper::StepError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_HYPOTHESIS: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("hypothesis violated: {0}")]
    Hypothesis(config::HypothesisError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Mms(#[from] MmsError),
    #[error(transparent)]
    Declab(#[from] DeclabError),
    #[error("{0}")]
    Failed(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) => EXIT_CONFIG,
            AppError::Io(io::IoError::ConfigMismatch { .. } | io::IoError::Version { .. }) => EXIT_CONFIG,
            AppError::Hypothesis(_) => EXIT_HYPOTHESIS,
            AppError::Step(StepError::Admissibility { .. }) => EXIT_HYPOTHESIS,
            AppError::Step(_) | AppError::Mms(_) | AppError::Declab(_) => EXIT_NUMERICAL,
            AppError::Io(_) | AppError::Failed(_) => EXIT_FAILURE,
        }
    }
}
