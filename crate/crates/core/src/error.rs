use std::path::PathBuf;

use thiserror::Error;

use crate::scenario::ValidationReport;
use crate::sim::SimTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario document: {0}")]
    Yaml(#[from] serde_yaml::Error),

    #[error("{field}: {message}")]
    Field { field: String, message: String },

    #[error("{field}: expected {expected} components, found {found}")]
    Dimension {
        field: String,
        expected: usize,
        found: usize,
    },

    #[error("scenario failed {} hard check(s)", .0.hard_failures().count())]
    Invalid(Box<ValidationReport>),

    #[error("simulation config: {0}")]
    Config(String),

    /// The state of `agent` became NaN or infinite while advancing `step`.
    /// The trace recorded up to that point is kept for inspection.
    #[error("non-finite state at step {step} (agent {agent})")]
    Aborted {
        step: usize,
        agent: String,
        partial: Box<SimTrace>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("trace format: {0}")]
    Trace(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("plot: {0}")]
    Plot(String),
}

impl Error {
    pub(crate) fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
