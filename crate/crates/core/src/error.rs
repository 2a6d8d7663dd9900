use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input row. `row` is 1-based and counts the header for CSV.
    #[error("{path}: row {row}: {msg}")]
    Parse { path: PathBuf, row: usize, msg: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} id `{id}`")]
    UnknownId { kind: &'static str, id: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("doctor `{0}` has no specialty")]
    MissingSpecialty(String),

    #[error("labels contain a single class only")]
    SingleClass,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training ratio {0} leaves a class empty")]
    DegenerateSplit(f64),

    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, row: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), row, msg: msg.into() }
    }
}
