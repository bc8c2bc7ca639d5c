use thiserror::Error;

use crate::cmdp::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid CMDP: {0}")]
    Invalid(ValidationReport),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("enumeration budget exceeded: needs more than {budget} terms")]
    Budget { budget: u64 },

    #[error("environment configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
