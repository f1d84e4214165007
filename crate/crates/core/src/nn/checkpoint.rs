//! Self-contained model file.
//!
//! ```text
//! "EDCN"  u32 version
//! u32 header length, header JSON
//! u32 tensor count, then per tensor:
//!     u32 name length, name, u32 rank, rank × u32 dims, f32 data
//! 32-byte SHA-256 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::{ModelParams, ModelShape, TENSOR_NAMES};
use super::train::{EpochStats, TrainConfig};
use crate::dataset::{FeatureScaler, MinMaxScaler};
use crate::decay::EdcGrid;
use crate::{Error, Result};

pub const MAGIC: &[u8; 4] = b"EDCN";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams,
    pub train_config: TrainConfig,
    pub scaler: FeatureScaler,
    /// Present when targets were scaled per index during training.
    pub target_scaler: Option<MinMaxScaler>,
    pub grid: EdcGrid,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    shape: ModelShape,
    train_config: TrainConfig,
    scaler: FeatureScaler,
    target_scaler: Option<MinMaxScaler>,
    grid: EdcGrid,
    history: Vec<EpochStats>,
    best_epoch: usize,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl ModelCheckpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            shape: self.params.shape,
            train_config: self.train_config,
            scaler: self.scaler.clone(),
            target_scaler: self.target_scaler.clone(),
            grid: self.grid,
            history: self.history.clone(),
            best_epoch: self.best_epoch,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(4 * self.params.n_params() + json.len() + 256);
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION as usize);
        put_u32(&mut out, json.len());
        out.extend_from_slice(&json);
        let tensors = self.params.tensors();
        put_u32(&mut out, tensors.len());
        for (name, data, dims) in tensors {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, dims.len());
            for d in dims {
                put_u32(&mut out, d);
            }
            for &v in data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::format(path, reason);
        if bytes.len() < 8 + DIGEST_LEN {
            return Err(bad("truncated"));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("not a model checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum {
                path: path.to_path_buf(),
            });
        }

        let mut r = Reader { buf: body, pos: 8 };
        let truncated = || bad("truncated");
        let hlen = r.u32().ok_or_else(truncated)?;
        let header: Header = serde_json::from_slice(r.take(hlen).ok_or_else(truncated)?)
            .map_err(|e| Error::format(path, format!("header: {e}")))?;

        let mut params = ModelParams::zeros(header.shape);
        let count = r.u32().ok_or_else(truncated)?;
        if count != TENSOR_NAMES.len() {
            return Err(bad("unexpected tensor count"));
        }
        let expected: Vec<(&str, Vec<usize>)> = params.tensors().iter().map(|t| (t.0, t.2.clone())).collect();
        for (slot, (want_name, want_dims)) in params.tensors_mut().into_iter().zip(expected) {
            let nlen = r.u32().ok_or_else(truncated)?;
            let name = r.take(nlen).ok_or_else(truncated)?;
            if name != want_name.as_bytes() {
                return Err(Error::format(path, format!("expected tensor {want_name}")));
            }
            let rank = r.u32().ok_or_else(truncated)?;
            let dims: Vec<usize> = (0..rank).map(|_| r.u32().ok_or_else(truncated)).collect::<Result<_>>()?;
            if dims != want_dims {
                return Err(Error::format(path, format!("tensor {want_name} has shape {dims:?}")));
            }
            let data = r.take(4 * slot.len()).ok_or_else(truncated)?;
            for (v, c) in slot.iter_mut().zip(data.chunks_exact(4)) {
                *v = f32::from_le_bytes(c.try_into().unwrap()) as f64;
            }
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes"));
        }

        Ok(ModelCheckpoint {
            params,
            train_config: header.train_config,
            scaler: header.scaler,
            target_scaler: header.target_scaler,
            grid: header.grid,
            history: header.history,
            best_epoch: header.best_epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<usize> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}
