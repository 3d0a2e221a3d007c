use std::path::PathBuf;

/// Errors produced by the core library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed delimited data: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: mapped column `{column}` not found in header")]
    MissingColumn { path: PathBuf, column: String },

    #[error("{path}:{line}: cannot parse `{value}` in column `{column}`")]
    BadValue {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },

    #[error("{path}: no usable rows")]
    NoUsableRows { path: PathBuf },

    #[error("non-monotone timestamps in segment from `{source_id}` at sample {index}")]
    NonMonotoneTime { source_id: String, index: usize },

    #[error("SOC span {span:.4} is below the minimum {min:.4}")]
    SocSpanTooSmall { span: f64, min: f64 },

    #[error("segment carries no charging current")]
    NotCharging,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("malformed model file: {0}")]
    ModelFormat(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
