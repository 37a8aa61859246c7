use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    #[error("cannot place {count} disks of radius {radius} m in the workspace")]
    Packing { count: usize, radius: f64 },

    #[error("target {target}: manipulation annulus is not contained in the observation annulus for every point of its TROI")]
    Containment { target: usize },

    #[error("task space is empty: no target has a reachable base cell")]
    EmptyTaskSpace,

    #[error("target {target}: observed point ({x}, {y}) lies outside its TROI")]
    InconsistentObservation { target: usize, x: f64, y: f64 },

    #[error("coverage threshold unreachable even with every region selected for targets {targets:?}")]
    Infeasible { targets: Vec<usize> },

    #[error("branch-and-bound exceeded the node limit of {limit}")]
    NodeLimit { limit: usize },

    #[error("LP relaxation failed: {0}")]
    Lp(#[from] minilp::Error),

    #[error("{0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Whether the error stems from user input (bad file, bad configuration,
    /// infeasible instance) rather than from a fault in the planner itself.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::NodeLimit { .. } | Error::Lp(_) | Error::Write { .. } | Error::Csv(_)
        )
    }
}
