//! Error type shared across the toolkit.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Text input could not be parsed; carries 1-based line and column.
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    /// A circuit, gate, or configuration violates a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Parameter vector length does not match the circuit's parameter count.
    #[error("parameter arity mismatch: circuit has {expected} parameters, got {got}")]
    ParamArity { expected: usize, got: usize },

    /// Gate or circuit not supported by the requested operation.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Two-qubit gate cannot be placed on the coupling map.
    #[error("routing error: {0}")]
    Routing(String),

    /// Backend profile is missing or inconsistent.
    #[error("backend profile error: {0}")]
    Profile(String),

    /// Circuit uses gates outside the native set expected by the encoder.
    #[error("graph encoding error: {0}")]
    Encoding(String),

    /// Checkpoint file is malformed or incompatible with the model config.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// Dataset file is malformed; carries the 1-based line number.
    #[error("dataset error at line {line}: {msg}")]
    Dataset { line: usize, msg: String },

    #[error("circuit library error: {0}")]
    Library(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Stable machine-readable kind for CLI error reporting.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::ParamArity { .. } => "param_arity",
            Error::Unsupported(_) => "unsupported",
            Error::Routing(_) => "routing",
            Error::Profile(_) => "profile",
            Error::Encoding(_) => "encoding",
            Error::Checkpoint(_) => "checkpoint",
            Error::Dataset { .. } => "dataset",
            Error::Library(_) => "library",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
