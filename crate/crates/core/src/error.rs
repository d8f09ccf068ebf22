use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the simulation, solver and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration is inconsistent or incomplete.
    #[error("config error: {0}")]
    Config(String),

    /// No further coagulation is possible (a single particle remains).
    #[error("absorbed state: total rate is zero")]
    Absorbed,

    /// The adaptive integrator could not make progress.
    #[error("step size underflow at t = {t}")]
    Stiffness { t: f64 },

    /// Integration produced a state violating a hard invariant.
    #[error("integration failure at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    /// Too many replicas of an ensemble failed.
    #[error("{failed} of {total} replicas failed; first failure: {first}")]
    Replicas {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user input rather than a runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Domain(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
