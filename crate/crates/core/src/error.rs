use std::path::PathBuf;

use thiserror::Error;

use crate::diffcore::DiffError;

#[derive(Debug, Error)]
pub enum NfmpError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("{0}")]
    WrongMode(String),
    #[error("non-finite loss {value} in {context}")]
    NonFiniteLoss { context: &'static str, value: f64 },
    #[error("training diverged at step {step}: loss {loss:e}")]
    Diverged { step: usize, loss: f64 },
    #[error("config error at line {line}, column {column} (key `{key}`): {message}")]
    Config { line: usize, column: usize, key: String, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed {what}: {message}")]
    Format { what: String, message: String },
}

impl NfmpError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        NfmpError::Io { path: path.into(), source }
    }

    pub(crate) fn format(what: impl Into<String>, message: impl Into<String>) -> Self {
        NfmpError::Format { what: what.into(), message: message.into() }
    }
}

pub type Result<T, E = NfmpError> = std::result::Result<T, E>;
