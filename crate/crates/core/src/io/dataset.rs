//! Trajectory dataset files.
//!
//! Binary layout: magic `PLWD`, then `u32` little-endian fields
//! `version, D, T, n_samples, S_1..S_D, scalar_width`, then the payload in
//! sample, snapshot, row-major spatial order. A JSON sidecar with the same
//! basename holds the generation metadata and the payload digest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{format_err, read, sha256_hex, write_atomic};
use crate::datagen::{DatasetMeta, IcSpec, PdeFamily, PdeSpec, Split, TrajectoryDataset};
use crate::error::Result;
use crate::scalar::Scalar;

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PLWD";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sidecar {
    family: PdeFamily,
    coefficient: f64,
    ic: IcSpec,
    master_seed: u64,
    split: Split,
    record_dt: f64,
    horizon: f64,
    solver_dt: f64,
    payload_sha256: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn encode<T: Scalar>(d: &TrajectoryDataset<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + d.data().len() * T::WIDTH as usize);
    out.extend_from_slice(MAGIC);
    let mut header = vec![DATASET_VERSION, d.spatial().len() as u32, d.n_snapshots() as u32, d.n_samples() as u32];
    header.extend(d.spatial().iter().map(|&s| s as u32));
    header.push(T::WIDTH);
    for h in header {
        out.extend_from_slice(&h.to_le_bytes());
    }
    for v in d.data() {
        v.write_le(&mut out);
    }
    out
}

fn payload_offset(bytes: &[u8]) -> usize {
    let dims = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    4 + 4 * (5 + dims)
}

/// SHA-256 of the payload bytes as they are stored on disk.
pub fn payload_digest<T: Scalar>(d: &TrajectoryDataset<T>) -> String {
    let mut bytes = Vec::with_capacity(d.data().len() * T::WIDTH as usize);
    for v in d.data() {
        v.write_le(&mut bytes);
    }
    sha256_hex(&bytes)
}

/// Writes the binary file at `path` and its sidecar next to it.
pub fn save_dataset<T: Scalar>(path: &Path, d: &TrajectoryDataset<T>) -> Result<()> {
    let bytes = encode(d);
    let m = &d.meta;
    let sidecar = Sidecar {
        family: m.pde.family,
        coefficient: m.pde.coefficient,
        ic: m.ic,
        master_seed: m.master_seed,
        split: m.split,
        record_dt: m.pde.record_dt,
        horizon: m.pde.horizon,
        solver_dt: m.pde.solver_dt,
        payload_sha256: sha256_hex(&bytes[payload_offset(&bytes)..]),
    };
    write_atomic(path, &bytes)?;
    write_atomic(&sidecar_path(path), serde_json::to_string_pretty(&sidecar)?.as_bytes())
}

/// Reads a dataset written by [`save_dataset`]. The stored scalar width must
/// match `T`.
pub fn load_dataset<T: Scalar>(path: &Path) -> Result<TrajectoryDataset<T>> {
    let bytes = read(path)?;
    let side_path = sidecar_path(path);
    let sidecar: Sidecar = serde_json::from_slice(&read(&side_path)?)
        .map_err(|e| format_err(&side_path, format!("invalid sidecar: {e}")))?;

    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(format_err(path, "not a dataset file (bad magic)"));
    }
    let word = |i: usize| -> Result<u32> {
        let at = 4 + 4 * i;
        bytes
            .get(at..at + 4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
            .ok_or_else(|| format_err(path, "truncated header"))
    };
    let version = word(0)?;
    if version != DATASET_VERSION {
        return Err(format_err(path, format!("unsupported format version {version}")));
    }
    let dims = word(1)? as usize;
    if !(1..=2).contains(&dims) {
        return Err(format_err(path, format!("unsupported dimension {dims}")));
    }
    let n_snapshots = word(2)? as usize;
    let n_samples = word(3)? as usize;
    let spatial = (0..dims).map(|d| word(4 + d).map(|s| s as usize)).collect::<Result<Vec<_>>>()?;
    let width = word(4 + dims)?;
    if width != T::WIDTH {
        return Err(format_err(path, format!("stored scalar width {width}, requested {}", T::WIDTH)));
    }
    if spatial.windows(2).any(|w| w[0] != w[1]) {
        return Err(format_err(path, "axes must share one resolution"));
    }
    let offset = payload_offset(&bytes);
    let count = n_samples
        .checked_mul(n_snapshots)
        .and_then(|v| v.checked_mul(spatial.iter().product()))
        .ok_or_else(|| format_err(path, "header sizes overflow"))?;
    let expected = count * width as usize;
    if bytes.len() - offset != expected {
        return Err(format_err(path, format!("payload is {} bytes, header implies {expected}", bytes.len() - offset)));
    }
    if sha256_hex(&bytes[offset..]) != sidecar.payload_sha256 {
        return Err(format_err(path, "payload digest does not match the sidecar"));
    }
    let w = width as usize;
    let data: Vec<T> = bytes[offset..].chunks_exact(w).map(T::read_le).collect();
    let pde = PdeSpec {
        family: sidecar.family,
        coefficient: sidecar.coefficient,
        dims,
        resolution: spatial[0],
        record_dt: sidecar.record_dt,
        horizon: sidecar.horizon,
        solver_dt: sidecar.solver_dt,
    };
    if pde.n_snapshots() != n_snapshots {
        return Err(format_err(path, "snapshot count disagrees with the sidecar time grid"));
    }
    let meta = DatasetMeta { pde, ic: sidecar.ic, master_seed: sidecar.master_seed, split: sidecar.split };
    TrajectoryDataset::from_parts(meta, n_samples, n_snapshots, spatial, data)
}
