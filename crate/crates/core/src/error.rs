use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A coded value fell outside its domain (fear level 5, age group 0, ...).
    #[error("invalid {what}: {value}")]
    Domain { what: &'static str, value: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}:{line}: duplicate key {key}")]
    DuplicateKey { path: PathBuf, line: u64, key: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("series are not aligned: {0}")]
    Alignment(String),

    #[error("insufficient data: need at least {required}, got {available}")]
    InsufficientData { required: usize, available: usize },

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    /// The quantity is mathematically undefined for this input (zero mean, zero variance, one cluster).
    #[error("undefined: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn domain(what: &'static str, value: impl ToString) -> Self {
        Error::Domain {
            what,
            value: value.to_string(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
