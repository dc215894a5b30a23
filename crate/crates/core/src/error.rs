use std::io;

use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: expected {expected_nx}x{expected_ny}, got {nx}x{ny}")]
    GridMismatch {
        expected_nx: usize,
        expected_ny: usize,
        nx: usize,
        ny: usize,
    },

    #[error("chain error: {0}")]
    Chain(String),

    #[error("lifter error: {0}")]
    Lifter(String),

    #[error("solver instability: {0}")]
    Instability(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("archive magic mismatch: found {0:?}")]
    MagicMismatch([u8; 4]),

    #[error("unsupported archive version {0}")]
    VersionMismatch(u32),

    #[error("archive kind mismatch: expected {expected}, found {found}")]
    KindMismatch { expected: u8, found: u8 },

    #[error("truncated archive: {0}")]
    Truncated(String),

    #[error("malformed archive: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
