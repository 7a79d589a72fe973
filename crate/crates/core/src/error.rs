use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("collection has no alive batches")]
    EmptyCollection,

    #[error("need at least {needed} alive batches, have {have}")]
    TooFewBatches { needed: usize, have: usize },

    #[error("alphabet size {k} exceeds the exhaustive-search cap of {cap}")]
    AlphabetTooLarge { k: usize, cap: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("collection carries no good/adversarial provenance")]
    MissingProvenance,

    #[error("every batch was deleted")]
    AllDeleted,

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
