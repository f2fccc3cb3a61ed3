use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An energy (or other lookup key) falls outside tabulated data.
    #[error("{quantity} {value} outside tabulated range [{low}, {high}]")]
    OutOfRange {
        quantity: &'static str,
        value: f64,
        low: f64,
        high: f64,
    },

    #[error("invalid attenuation table{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Table {
        line: Option<usize>,
        message: String,
    },

    /// A configuration field failed validation. `path` is the dotted field path.
    #[error("{path}: {message}")]
    Validation { path: String, message: String },

    #[error("incompatible spectra: {0}")]
    Incompatible(String),

    #[error("unknown {kind} `{name}`")]
    Unknown { kind: &'static str, name: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
