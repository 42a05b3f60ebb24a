use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported enumeration: {0}")]
    UnsupportedEnumeration(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("state error: {0}")]
    State(String),

    #[error("diagnostics error: {0}")]
    Diagnostics(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("evaluation error: {message}")]
    Evaluation { message: String, raw_output: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation { .. } => "validation",
            Error::Domain(_) => "domain",
            Error::UnsupportedEnumeration(_) => "unsupported_enumeration",
            Error::Fit(_) => "fit",
            Error::Dimension { .. } => "dimension",
            Error::State(_) => "state",
            Error::Diagnostics(_) => "diagnostics",
            Error::Unsupported(_) => "unsupported",
            Error::Evaluation { .. } => "evaluation",
            Error::Protocol(_) => "protocol",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Io(_) => "io",
        }
    }
}
