//! The run manifest: everything needed to reproduce an embedding run
//! byte-for-byte, plus bookkeeping (input digest, wall time, memory model).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CleoraError, Result};
use crate::expansion::Expansion;
use crate::ingest::InputFormat;
use crate::memory::MemoryModel;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputManifest {
    pub path: PathBuf,
    pub format: InputFormat,
    pub sha256: String,
    pub rows_read: u64,
    pub rows_skipped: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairManifest {
    pub left: String,
    pub right: String,
    pub output_columns: Vec<String>,
    pub nodes: u64,
    pub virtual_nodes: u64,
    /// Expanded edge count before coalescing.
    pub edges: u64,
    pub memory: MemoryModel,
    pub memory_bytes: u64,
    pub zero_rows: u64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub created_unix_ms: u64,
    pub input: InputManifest,
    pub schema: String,
    pub weighted: bool,
    pub strict: bool,
    pub expansion: Expansion,
    pub dim: usize,
    pub iterations: usize,
    pub seed: u64,
    pub chunks: usize,
    pub keep_penultimate: bool,
    pub normalize_merged: bool,
    pub wall_time_ms: u64,
    pub pairs: Vec<PairManifest>,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let file = File::create(&path).map_err(|e| CleoraError::io(&path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| CleoraError::Internal(format!("manifest serialization failed: {e}")))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let file = File::open(path).map_err(|e| CleoraError::io(path, e))?;
        serde_json::from_reader(BufReader::new(file)).map_err(|e| {
            CleoraError::Config(format!("cannot parse manifest {}: {e}", path.display()))
        })
    }

    /// Load the manifest stored in a model directory.
    pub fn load_dir(dir: &Path) -> Result<RunManifest> {
        RunManifest::load(&dir.join(MANIFEST_FILE))
    }
}

/// Streaming SHA-256 of a file, hex-encoded.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| CleoraError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CleoraError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write;
        write!(hex, "{byte:02x}").unwrap();
    }
    Ok(hex)
}

pub fn now_unix_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
