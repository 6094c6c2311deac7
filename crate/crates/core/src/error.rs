use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
///
/// Variants are grouped by how a caller is expected to react: malformed inputs
/// (`Format`, `Parse`, `Validation`), programming/config mistakes
/// (`InvalidInput`, `Range`, `Config`, `Dimension`) and environmental failures
/// (`Io`, `Materialization`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported audio format: {0}")]
    Format(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("invalid fake/real pair: {0}")]
    InvalidPair(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("missing feature files for ids: {}", .0.join(", "))]
    Materialization(Vec<String>),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

    /// Wraps an I/O error with the path it concerns.
impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
