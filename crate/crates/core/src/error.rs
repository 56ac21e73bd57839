use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("index {index} out of range (len {len})")]
    Bounds { index: usize, len: usize },

    #[error("invalid state: {0}")]
    State(String),

    #[error("training failed at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("evaluation failed: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Coarse error classes, used by the command-line tool to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Format,
    Training,
    Evaluation,
}

impl Error {
    pub fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_) | Error::Config(_) | Error::Bounds { .. } | Error::State(_) => {
                ErrorClass::Config
            }
            Error::Format { .. } | Error::Io(_) => ErrorClass::Format,
            Error::Training { .. } => ErrorClass::Training,
            Error::Evaluation(_) => ErrorClass::Evaluation,
        }
    }
}
