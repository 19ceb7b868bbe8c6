//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },

    #[error("duplicate frame_id {id} at manifest line {line}")]
    DuplicateFrameId { id: u64, line: usize },

    #[error("frame_id {id} at manifest line {line} does not match its record index {expected}")]
    FrameIdOutOfOrder { id: u64, line: usize, expected: u64 },

    #[error("{path}: {msg}")]
    EmbeddingFormat { path: PathBuf, msg: String },

    #[error("{path}: {msg}")]
    Json { path: PathBuf, msg: String },

    #[error("manifest describes {frames} frames but embedding file holds {rows} rows")]
    RowCountMismatch { frames: usize, rows: usize },

    #[error("non-finite embedding value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("embedding row {row} is flagged normalized but has norm {norm}")]
    NotNormalized { row: usize, norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("embeddings must carry the row-normalized flag for this operation")]
    UnitNormRequired,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("dataset failed validation:\n{0}")]
    InvalidDataset(ValidationReport),

    #[error("unknown sequence id {0:?}")]
    UnknownSequence(String),

    #[error(
        "no {k}-clique left after {restarts} graph restarts \
         ({found} of {needed} clique places filled)"
    )]
    MiningInfeasible {
        k: usize,
        restarts: u32,
        found: usize,
        needed: usize,
    },

    #[error("sparse place group {seq_id:?} has {len} frames, need at least {k}")]
    SparseGroupTooSmall {
        seq_id: String,
        len: usize,
        k: usize,
    },

    #[error("asked for {needed} sparse places but only {available} groups exist")]
    NotEnoughSparseGroups { needed: usize, available: usize },

    #[error("batch collection references frame_id {id} outside the feature matrix ({rows} rows)")]
    FrameIdOutOfRange { id: u64, rows: usize },

    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: usize },

    #[error("database is empty")]
    EmptyDatabase,

    #[error("fingerprint mismatch for {role} dataset: collection was mined from {expected}, got {actual}")]
    FingerprintMismatch {
        role: &'static str,
        expected: String,
        actual: String,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }
}
