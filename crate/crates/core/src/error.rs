use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A flow-direction byte outside the ten legal codes.
    #[error("illegal flow direction byte {0}")]
    InvalidFlowDir(u8),

    /// Flow directions form a directed cycle; the input was not derived from
    /// strictly descending elevations.
    #[error("cyclic flow directions detected ({0})")]
    CyclicFlow(String),

    /// Coordinate or index outside its valid range.
    #[error("{0}")]
    OutOfRange(String),

    /// Manifest or grid dimensions that violate the layout invariants.
    #[error("format error: {0}")]
    Format(String),

    /// A tile file whose byte length does not match its declared dimensions.
    #[error("size mismatch for {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    /// A malformed or inconsistent inter-stage message.
    #[error("protocol error: {0}")]
    Protocol(String),

    /// A cache spill that is missing or unreadable.
    #[error("cache error for tile {tile}: {detail}")]
    Cache { tile: String, detail: String },

    /// Retained in-memory state that should exist but does not.
    #[error("missing retained state for tile {0}")]
    MissingState(String),

    /// A worker aborted the job.
    #[error("worker failed on tile {tile}: {source}")]
    Worker {
        tile: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
}
