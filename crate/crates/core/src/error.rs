use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied arguments that violate an operation's preconditions.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// `I - U B` is (numerically) singular for the named intervention set.
    #[error("weak stability violated for intervention set {intervened:?}")]
    WeakStability { intervened: Vec<usize> },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient sample size: need more than {needed} rows, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    /// A structural identifiability condition on the experimental setup failed.
    #[error("condition violated: {0}")]
    Condition(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("bootstrap resample {index}: {source}")]
    Resample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("SCM generation failed: {0}")]
    Generation(String),

    #[error("unknown setup id {id}; valid ids are 0, 11-15, 21-25, 31-35, 41-45")]
    UnknownSetup { id: u32 },

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
