//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `KGTXCKPT` |
//! | 4     | format version (u32, currently 1) |
//! | 8     | manifest length `m` (u64) |
//! | m     | manifest, UTF-8 JSON |
//! | ...   | tensors as f32, in manifest order, row-major |
//!
//! The manifest records dims, the full vocabulary and its hash, the seed,
//! the training iteration, and every tensor's name and shape.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Dims, ModelError, Seq2Seq};
use crate::params::{ParamStore, Shape};
use crate::real::Real;
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"KGTXCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("vocabulary hash mismatch")]
    VocabHash,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dims: Dims,
    pub vocab: Vocabulary,
    pub vocab_hash: String,
    pub seed: u64,
    pub iteration: u64,
    pub tensors: Vec<Shape>,
}

pub fn to_bytes<F: Real>(model: &Seq2Seq<F>, seed: u64, iteration: u64) -> Vec<u8> {
    let manifest = Manifest {
        dims: model.dims,
        vocab: model.vocab.clone(),
        vocab_hash: model.vocab.hash(),
        seed,
        iteration,
        tensors: model.params.shapes.clone(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let mut out = Vec::with_capacity(20 + json.len() + 4 * model.params.count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &model.params.data {
        for x in t {
            out.extend_from_slice(&x.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> Result<(Seq2Seq<f32>, Manifest), CheckpointError> {
    let take = |from: usize, n: usize| bytes.get(from..from + n).ok_or(CheckpointError::Truncated);
    if take(0, 8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(8, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mlen = u64::from_le_bytes(take(12, 8)?.try_into().unwrap()) as usize;
    let manifest: Manifest = serde_json::from_slice(take(20, mlen)?)?;
    if manifest.vocab.hash() != manifest.vocab_hash {
        return Err(CheckpointError::VocabHash);
    }
    let mut off = 20 + mlen;
    let mut params = ParamStore::<f32>::default();
    for s in &manifest.tensors {
        let raw = take(off, 4 * s.len())?;
        params.shapes.push(s.clone());
        params.data.push(raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect());
        off += 4 * s.len();
    }
    if off != bytes.len() {
        return Err(CheckpointError::Truncated);
    }
    let model = Seq2Seq::from_params(manifest.dims, manifest.vocab.clone(), params)?;
    Ok((model, manifest))
}

pub fn save<F: Real>(model: &Seq2Seq<F>, path: &Path, seed: u64, iteration: u64) -> Result<(), CheckpointError> {
    fs::write(path, to_bytes(model, seed, iteration))
        .map_err(|source| CheckpointError::Io { path: path.into(), source })
}

pub fn load(path: &Path) -> Result<(Seq2Seq<f32>, Manifest), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.into(), source })?;
    from_bytes(&bytes)
}

/// Hex SHA-256 of the parameter values, for determinism checks.
pub fn params_hash<F: Real>(model: &Seq2Seq<F>) -> String {
    let mut h = Sha256::new();
    for t in &model.params.data {
        for x in t {
            h.update(x.to_f64().unwrap().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
