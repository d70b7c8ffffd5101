use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants are grouped so that a front end can map them onto distinct exit
/// codes: configuration, data, numeric faults and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("undefined metric {metric}: {reason}")]
    UndefinedMetric { metric: &'static str, reason: String },

    #[error("numeric fault: {0}")]
    Numeric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    /// Short stable identifier, e.g. for `error[E_DATA]: ...` lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Shape { .. } => "E_SHAPE",
            Error::Config(_) => "E_CONFIG",
            Error::Usage(_) => "E_USAGE",
            Error::Data(_) => "E_DATA",
            Error::UndefinedMetric { .. } => "E_METRIC",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Io { .. } => "E_IO",
            Error::Checkpoint(_) => "E_CHECKPOINT",
        }
    }

    /// Process exit status: 2 configuration, 3 data, 4 numeric, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) => 2,
            Error::Data(_) | Error::Shape { .. } | Error::Checkpoint(_) => 3,
            Error::Numeric(_) | Error::UndefinedMetric { .. } => 4,
            Error::Io { .. } => 5,
        }
    }

    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
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
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
