use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("pole: {0}")]
    Pole(String),

    #[error("numerical failure in {what}: estimate {value:e} with error {error:e}")]
    Numeric { what: String, value: f64, error: f64 },

    #[error("series truncated after {terms} terms: partial sum {partial:e}, last term {last_term:e}")]
    Truncation { terms: usize, partial: f64, last_term: f64 },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("stability: {0}")]
    Stability(String),

    #[error("blow-up in replica {replica} at step {step}: max |u| = {max_abs:e}")]
    BlowUp { replica: u64, step: usize, max_abs: f64 },

    #[error("noise synthesis: {0}")]
    Synthesis(String),

    #[error("placement: {0}")]
    Placement(String),

    #[error("convergence failure: {0}")]
    Convergence(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
