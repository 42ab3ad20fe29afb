use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("rotation is not orthonormal (max deviation {0:.3e})")]
    NonOrthonormalRotation(f64),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("invalid synthetic scene spec: {0}")]
    InvalidSpec(String),
    #[error("degenerate pose average (axis norm {0:.3e})")]
    DegenerateAverage(f64),
    #[error("point lies behind the near plane of the reference camera")]
    BehindNearPlane,
    #[error("point lies on the polar axis; azimuth is undefined")]
    PoleDegenerate,
    #[error("direction is not unit length (norm {0})")]
    NonUnitDirection(f64),
    #[error("invalid sampling bounds: {0}")]
    InvalidBounds(String),
    #[error("empty ray batch")]
    EmptyBatch,
    #[error("loss became non-finite at step {0}")]
    NonFiniteLoss(u64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("edit metadata does not match checkpoint: {0}")]
    StaleMetadata(String),
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
