use std::path::PathBuf;

use thiserror::Error;

use crate::decision::Action;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid beam layout: {0}")]
    InvalidLayout(String),

    #[error("cell (i={i}, j={j}, k={k}) is not part of the map")]
    CellOutOfRange { i: usize, j: usize, k: usize },

    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),

    #[error("degenerate Bayes update at cell {cell}: likelihoods ({l1}, {l0})")]
    DegenerateUpdate { cell: usize, l1: f64, l0: f64 },

    #[error("ping does not align with the layout: {0}")]
    Alignment(String),

    #[error("configuration error at `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("action {0:?} has no trajectories")]
    UnknownAction(Action),

    #[error("no action has a finite risk")]
    NoFiniteRisk,

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("snapshot time {requested} s outside the log span [{first}, {last}] s")]
    SnapshotOutOfRange {
        requested: f64,
        first: f64,
        last: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
