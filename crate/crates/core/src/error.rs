use std::path::PathBuf;

use thiserror::Error;

use crate::domain::Violation;

/// Errors raised by the protocol functions and the simulation harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} must be > 0 (got {value})")]
    NonPositive { what: &'static str, value: f64 },

    #[error("no processor available")]
    NoProcessorAvailable,

    #[error("no scheduler available")]
    NoSchedulerAvailable,

    #[error("no capacity estimate available")]
    NoCapacityEstimate,

    #[error("no demand in the task handler")]
    NoDemand,

    #[error("no requests routed to schedulers")]
    NoRequests,

    #[error("missing objective triple for task {task} on processor {processor}")]
    MissingObjective { task: u64, processor: u32 },

    #[error("scenario is invalid: {}", .0.first().map(|v| v.to_string()).unwrap_or_default())]
    Invalid(Vec<Violation>),

    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("unknown override field `{0}`")]
    UnknownField(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Rejects zero, negative, and non-finite rates.
pub(crate) fn require_positive(what: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonPositive { what, value })
    }
}
