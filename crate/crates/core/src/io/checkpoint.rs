//! Model checkpoints: a JSON manifest `<name>.json` and a contiguous
//! little-endian tensor blob `<name>.bin`.
//!
//! Tensors are stored in canonical path order; Fourier weights store their
//! real part followed by their imaginary part. The content id is the SHA-256
//! of the serialized config followed by the blob.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{format_err, read, write_atomic};
use crate::error::{usage, Result};
use crate::model::{FfnoConfig, FfnoParams, ParamPath};
use crate::scalar::Scalar;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// digest of the training data payload
    pub dataset_sha256: String,
    /// content id of the checkpoint this one was fine-tuned from
    pub parent: Option<String>,
    /// fine-tuning tag and downstream sample count, absent for pretrained models
    pub finetune: Option<String>,
    pub n_samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub iterations: usize,
    pub final_lr: f64,
    pub final_loss: f64,
    pub optimizer_step: u64,
    /// zero unless timing was requested, so reruns stay byte-identical
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub params: FfnoParams<T>,
    pub provenance: Provenance,
    pub training: Option<TrainingSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    path: String,
    shape: Vec<usize>,
    complex: bool,
    /// offset and length in scalars
    offset: usize,
    len: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: FfnoConfig,
    scalar_width: u32,
    blob_len: usize,
    content_id: String,
    tensors: Vec<TensorEntry>,
    provenance: Provenance,
    training: Option<TrainingSummary>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn blob_path(path: &Path) -> PathBuf {
    path.with_extension("bin")
}

fn content_id(config: &FfnoConfig, blob: &[u8]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config)?);
    h.update(blob);
    Ok(hex::encode(h.finalize()))
}

fn encode<T: Scalar>(params: &FfnoParams<T>) -> (Vec<u8>, Vec<TensorEntry>) {
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    let mut offset = 0;
    for p in params.paths() {
        let slices = params.slices(&p).expect("canonical path");
        let len: usize = slices.iter().map(|s| s.len()).sum();
        for s in &slices {
            for v in s.iter() {
                v.write_le(&mut blob);
            }
        }
        tensors.push(TensorEntry { path: p.to_string(), shape: params.tensor_shape(&p), complex: p.is_fourier(), offset, len });
        offset += len;
    }
    (blob, tensors)
}

/// Content id the parameters would get when saved.
pub fn content_id_of<T: Scalar>(params: &FfnoParams<T>) -> Result<String> {
    content_id(&params.config, &encode(params).0)
}

/// Writes `<path>.json` and `<path>.bin`; returns the content id.
pub fn save_checkpoint<T: Scalar>(path: &Path, ckpt: &Checkpoint<T>) -> Result<String> {
    let params = &ckpt.params;
    let (blob, tensors) = encode(params);
    let id = content_id(&params.config, &blob)?;
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        config: params.config,
        scalar_width: T::WIDTH,
        blob_len: blob.len(),
        content_id: id.clone(),
        tensors,
        provenance: ckpt.provenance.clone(),
        training: ckpt.training,
    };
    write_atomic(&blob_path(path), &blob)?;
    write_atomic(&manifest_path(path), serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(id)
}

/// Loads a checkpoint, optionally insisting on a model config.
pub fn load_checkpoint<T: Scalar>(path: &Path, expected: Option<&FfnoConfig>) -> Result<Checkpoint<T>> {
    let mpath = manifest_path(path);
    let bpath = blob_path(path);
    let manifest: Manifest =
        serde_json::from_slice(&read(&mpath)?).map_err(|e| format_err(&mpath, format!("invalid manifest: {e}")))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(format_err(&mpath, format!("unsupported format version {}", manifest.format_version)));
    }
    if manifest.scalar_width != T::WIDTH {
        return Err(format_err(&mpath, format!("stored scalar width {}, requested {}", manifest.scalar_width, T::WIDTH)));
    }
    if let Some(want) = expected {
        if *want != manifest.config {
            return Err(usage(format!(
                "checkpoint {} has config {:?}, expected {:?}",
                mpath.display(),
                manifest.config,
                want
            )));
        }
    }
    let blob = read(&bpath)?;
    if blob.len() != manifest.blob_len {
        return Err(format_err(&bpath, format!("blob is {} bytes, manifest says {}", blob.len(), manifest.blob_len)));
    }
    if content_id(&manifest.config, &blob)? != manifest.content_id {
        return Err(format_err(&bpath, "content id mismatch"));
    }

    let mut params = FfnoParams::<T>::zeros(manifest.config)?;
    let paths = params.paths();
    if manifest.tensors.len() != paths.len() {
        return Err(format_err(&mpath, format!("{} tensors listed, model has {}", manifest.tensors.len(), paths.len())));
    }
    let w = T::WIDTH as usize;
    let mut next = 0;
    for (entry, p) in manifest.tensors.iter().zip(&paths) {
        let parsed: ParamPath = entry.path.parse()?;
        if parsed != *p || entry.shape != params.tensor_shape(p) || entry.complex != p.is_fourier() || entry.offset != next {
            return Err(format_err(&mpath, format!("tensor entry {} does not match the model layout", entry.path)));
        }
        let mut slices = params.slices_mut(p).expect("canonical path");
        let total: usize = slices.iter().map(|s| s.len()).sum();
        if entry.len != total || (entry.offset + total) * w > blob.len() {
            return Err(format_err(&mpath, format!("tensor {} has the wrong length", entry.path)));
        }
        let mut at = entry.offset * w;
        for s in slices.iter_mut() {
            for v in s.iter_mut() {
                *v = T::read_le(&blob[at..at + w]);
                at += w;
            }
        }
        next += total;
    }
    if next * w != blob.len() {
        return Err(format_err(&bpath, "blob has trailing data"));
    }
    if !params.is_finite() {
        return Err(format_err(&bpath, "non-finite parameter values"));
    }
    Ok(Checkpoint { params, provenance: manifest.provenance, training: manifest.training })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::model::{init_params, Activation};

    fn cfg() -> FfnoConfig {
        FfnoConfig { dims: 1, layers: 2, width: 4, modes: 3, ff_expansion: 2, activation: Activation::Relu }
    }

    fn ckpt() -> Checkpoint<f32> {
        Checkpoint {
            params: init_params(&cfg(), 3).unwrap(),
            provenance: Provenance { seed: 3, dataset_sha256: "ab".into(), parent: None, finetune: None, n_samples: None },
            training: Some(TrainingSummary { iterations: 10, final_lr: 1e-3, final_loss: 0.5, optimizer_step: 10, wall_time_s: 0.0 }),
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m");
        let c = ckpt();
        let id = save_checkpoint(&path, &c).unwrap();
        let back: Checkpoint<f32> = load_checkpoint(&path, Some(&cfg())).unwrap();
        assert_eq!(back, c);
        for p in c.params.paths() {
            let a: Vec<u32> = c.params.slices(&p).unwrap().concat().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = back.params.slices(&p).unwrap().concat().iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b);
        }
        assert_eq!(save_checkpoint(&dir.path().join("m2.json"), &c).unwrap(), id);
    }

    #[test]
    fn mismatches_and_damage_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m");
        save_checkpoint(&path, &ckpt()).unwrap();
        let other = FfnoConfig { width: 8, ..cfg() };
        assert!(matches!(load_checkpoint::<f32>(&path, Some(&other)), Err(Error::Usage(_))));
        assert!(matches!(load_checkpoint::<f64>(&path, None), Err(Error::Format { .. })));

        let blob = std::fs::read(blob_path(&path)).unwrap();
        std::fs::write(blob_path(&path), &blob[..blob.len() - 4]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path, None), Err(Error::Format { .. })));
        let mut flipped = blob.clone();
        flipped[5] ^= 1;
        std::fs::write(blob_path(&path), &flipped).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path, None), Err(Error::Format { .. })));
        std::fs::write(blob_path(&path), &blob).unwrap();

        let manifest = std::fs::read_to_string(manifest_path(&path)).unwrap();
        std::fs::write(manifest_path(&path), manifest.replace("\"format_version\": 1", "\"format_version\": 9")).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path, None), Err(Error::Format { .. })));
        std::fs::write(manifest_path(&path), &manifest[..manifest.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint::<f32>(&path, None), Err(Error::Format { .. })));
        std::fs::write(manifest_path(&path), &manifest).unwrap();
        assert!(load_checkpoint::<f32>(&path, None).is_ok());
    }
}
