//! Crate-wide error type with CLI exit-code mapping.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("solver guard: {0}")]
    SolverGuard(String),
    #[error("step size: {0}")]
    StepSize(String),
    #[error("integration failure: {0}")]
    IntegrationFailure(String),
    #[error("steady-state ambiguity: {0}")]
    Ambiguity(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("inconclusive: {0}")]
    Inconclusive(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for usage/config problems, 3 for solver guard
    /// violations, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Fit(_) | Error::Data(_) | Error::StepSize(_) => 2,
            Error::Io(_) | Error::Json(_) => 2,
            Error::SolverGuard(_) => 3,
            _ => 1,
        }
    }
}
