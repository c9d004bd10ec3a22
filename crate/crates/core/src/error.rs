use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the DUET pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A value fell outside the domain of an operation (bad label, absent class, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A sample name failed to parse. `field` names the offending component.
    #[error("invalid sample name {text:?}: {field}: {message}")]
    SampleName {
        text: String,
        field: &'static str,
        message: String,
    },

    /// Malformed skeleton CSV or other on-disk payload.
    #[error("format error: {0}")]
    Format(String),

    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A serialized document did not match its schema.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Training { epoch: usize, message: String },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the environment rather than by the inputs.
    pub fn is_environmental(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
