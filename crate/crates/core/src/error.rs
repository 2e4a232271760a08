use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("empty region")]
    EmptyRegion,

    #[error("degenerate seeds: {0}")]
    DegenerateSeeds(String),

    #[error("invalid training data: {0}")]
    InvalidData(String),

    #[error("linear solve failed: {0}")]
    SolveFailure(String),

    #[error("ground truth contains no positive pixels")]
    EmptyGroundTruth,
}

pub type Result<T> = std::result::Result<T, Error>;
