use std::path::PathBuf;

use crate::model::{BranchId, BusId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid case: {0}")]
    Validation(String),

    #[error("bus {0} does not exist")]
    UnknownBus(BusId),

    #[error("branch {0} does not exist")]
    UnknownBranch(BranchId),

    #[error("bus id {0} collides after remapping")]
    IdCollision(BusId),

    #[error("singular susceptance matrix in island {island:?}")]
    Singular { island: Vec<BusId> },

    #[error("cascade did not settle after {steps} steps")]
    NoConvergence { steps: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
