//! Error type shared by every module in the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand dimensions do not satisfy an operation's contract.
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A value lies outside the mathematical domain of an operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// A configuration value violates its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data is degenerate (e.g. a zero-norm feature vector).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// Input data is missing or malformed at the dataset level.
    #[error("invalid input: {0}")]
    Input(String),

    /// A non-finite value was produced or supplied where finiteness is required.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A file exists but does not match its expected binary or text format.
    #[error("malformed file {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// A checkpoint does not match the configuration it is being used with.
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    /// A gradient verification suite exceeded its tolerance.
    #[error("verification failed: {0}")]
    Verification(String),

    #[error("usage error: {0}")]
    Usage(String),
}

impl Error {
    pub fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// Process exit code the CLI maps this error to: 1 usage/config,
    /// 2 I/O, 3 numeric failure, 4 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Io { .. } | Error::Format { .. } | Error::Input(_) | Error::Incompatible(_) => {
                2
            }
            Error::Shape { .. }
            | Error::Domain { .. }
            | Error::DegenerateInput(_)
            | Error::Numeric(_) => 3,
            Error::Verification(_) => 4,
        }
    }
}
