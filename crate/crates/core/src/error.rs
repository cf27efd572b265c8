use thiserror::Error;

use crate::linalg::LinalgError;
use crate::models::ModelError;

/// Errors raised by the analysis layers (radius, lyapunov, mcsim).
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("assumptions not met: {0}")]
    AssumptionsNotMet(String),
    #[error("system is not stable: {0}")]
    Unstable(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front-end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Linalg(LinalgError::DimensionCap { .. }) => 5,
            Error::Linalg(LinalgError::SolverFailure { .. }) => 6,
            Error::Linalg(LinalgError::Precondition(_)) => 4,
            Error::Linalg(_) => 1,
            Error::Model(_) | Error::Io(_) | Error::InvalidArgument(_) => 1,
            Error::AssumptionsNotMet(_) => 4,
            Error::Unstable(_) => 2,
        }
    }
}
