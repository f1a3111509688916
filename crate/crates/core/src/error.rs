use std::path::PathBuf;

use thiserror::Error;

use crate::gridmap::CellIndex;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid map: {0}")]
    InvalidMap(String),
    #[error("map parse error at line {line}: {msg}")]
    MapParse { line: usize, msg: String },
    #[error("cell {0:?} is outside the map")]
    OutOfBounds(CellIndex),
    #[error("{what} lies in an occupied cell")]
    Occupied { what: &'static str },
    #[error("no collision-free path between start and goal")]
    Unreachable,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("pitch {0:.4} rad is too close to the Euler singularity")]
    Singular(f64),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("environment {index}: {source}")]
    Env {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("observation layout mismatch: checkpoint expects {expected}, found {found}")]
    LayoutMismatch { expected: String, found: String },
    #[error("missing checkpoint for model tag `{0}`")]
    MissingModel(String),
    #[error("trace parse error at line {line}: {msg}")]
    TraceParse { line: usize, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
