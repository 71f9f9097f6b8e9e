use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the embedding engine.
///
/// The CLI maps these onto its exit-code contract via [`CleoraError::exit_code`]:
/// anything caused by user-supplied data or configuration is `3`, violations of
/// internal invariants are `4` (usage errors are handled by the argument parser
/// itself and exit with `2`).
#[derive(Debug, Error)]
pub enum CleoraError {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("{path}:{line}: {msg}")]
    Row { path: PathBuf, line: u64, msg: String },

    #[error("hash collision in column '{namespace}': labels {first:?} and {second:?} map to the same 64-bit id")]
    HashCollision {
        namespace: String,
        first: String,
        second: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot reconstruct: {0}")]
    Reconstruct(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("internal error: {0}")]
    Internal(String),
}

impl CleoraError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CleoraError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 3 for data/config problems, 4 for bugs.
    pub fn exit_code(&self) -> i32 {
        match self {
            CleoraError::Internal(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, CleoraError>;
