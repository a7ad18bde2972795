//! Crate-wide error type and exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AttmotError>;

#[derive(Debug, Error)]
pub enum AttmotError {
    /// Bad user input: configs, shapes, parameter ranges, malformed files.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),

    /// Non-finite values encountered during computation.
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl AttmotError {
    pub fn validation(msg: impl Into<String>) -> Self {
        AttmotError::Validation(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        AttmotError::Format(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        AttmotError::Numeric(msg.into())
    }

    /// CLI exit code: 1 validation, 2 runtime, 3 numeric divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            AttmotError::Validation(_) | AttmotError::Format(_) => 1,
            AttmotError::Io(_) => 2,
            AttmotError::Numeric(_) => 3,
        }
    }
}

impl From<serde_json::Error> for AttmotError {
    fn from(e: serde_json::Error) -> Self {
        AttmotError::Format(e.to_string())
    }
}
