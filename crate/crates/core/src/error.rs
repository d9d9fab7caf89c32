use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the toolkit.
///
/// Variants are grouped so a front end can map them onto exit codes:
/// configuration problems, bad input data, and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidInput(String),

    #[error("{path}: row {row}: {message}")]
    MalformedRow {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("infeasible battery action at step {step}: {message}")]
    Infeasible { step: usize, message: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for this error class: 1 config, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 1,
            Error::MalformedRow { .. } | Error::Data(_) | Error::Io(_) | Error::Csv(_) => 2,
            Error::Json(_) => 2,
            Error::Infeasible { .. } | Error::Numerical(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
