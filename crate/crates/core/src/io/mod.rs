//! On-disk formats for datasets and checkpoints.
//!
//! Both formats pair a JSON description with a little-endian binary payload
//! whose SHA-256 is recorded, so truncation and bit flips are detected on
//! load. Files are written to a temporary name and renamed into place.

pub mod checkpoint;
pub mod dataset;

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Provenance, TrainingSummary, CHECKPOINT_VERSION};
pub use dataset::{load_dataset, payload_digest, save_dataset, DATASET_VERSION};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

pub(crate) fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(io_err(path))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}
