//! On-disk dataset directory.
//!
//! ```text
//! manifest.json   manifest + SHA-256 of every other file
//! features.f32    [n_rooms × 16] little-endian f32, row-major
//! targets.f32     [n_rooms × grid.len]
//! t60.f32         [n_rooms]
//! splits.json     {"train": [...], "val": [...], "test": [...]}
//! scaler.json     {"min": [...], "max": [...]}
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Dataset, DatasetManifest, FeatureScaler, Splits, SCHEMA_VERSION};
use crate::room::N_FEATURES;
use crate::{Error, Result};

const MANIFEST: &str = "manifest.json";
const FEATURES: &str = "features.f32";
const TARGETS: &str = "targets.f32";
const T60: &str = "t60.f32";
const SPLITS: &str = "splits.json";
const SCALER: &str = "scaler.json";

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn f32_from_bytes(b: &[u8], path: &Path) -> Result<Vec<f32>> {
    if !b.len().is_multiple_of(4) {
        return Err(Error::format(path, "length is not a multiple of 4"));
    }
    Ok(b.chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes every file and returns the manifest with checksums filled in.
pub fn save(ds: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files: [(&str, Vec<u8>); 5] = [
        (FEATURES, f32_bytes(&ds.features)),
        (TARGETS, f32_bytes(&ds.targets)),
        (T60, f32_bytes(&ds.t60)),
        (SPLITS, serde_json::to_vec_pretty(&ds.splits)?),
        (SCALER, serde_json::to_vec_pretty(&ds.scaler)?),
    ];
    let mut manifest = ds.manifest.clone();
    manifest.checksums.clear();
    for (name, bytes) in &files {
        write(dir, name, bytes)?;
        manifest.checksums.insert(name.to_string(), sha256_hex(bytes));
    }
    write(dir, MANIFEST, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<Dataset> {
    let mpath = dir.join(MANIFEST);
    let text = fs::read(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let value: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    let version = value
        .get("schema_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::format(&mpath, "missing schema_version"))? as u32;
    if version != SCHEMA_VERSION {
        return Err(Error::VersionMismatch {
            path: mpath,
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let manifest: DatasetManifest =
        serde_json::from_value(value).map_err(|e| Error::format(&mpath, e.to_string()))?;

    let read_checked = |name: &str| -> Result<Vec<u8>> {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        match manifest.checksums.get(name) {
            Some(sum) if *sum == sha256_hex(&bytes) => Ok(bytes),
            _ => Err(Error::Checksum { path }),
        }
    };

    let features = f32_from_bytes(&read_checked(FEATURES)?, &dir.join(FEATURES))?;
    let targets = f32_from_bytes(&read_checked(TARGETS)?, &dir.join(TARGETS))?;
    let t60 = f32_from_bytes(&read_checked(T60)?, &dir.join(T60))?;
    let splits: Splits = serde_json::from_slice(&read_checked(SPLITS)?)
        .map_err(|e| Error::format(dir.join(SPLITS), e.to_string()))?;
    let scaler: FeatureScaler = serde_json::from_slice(&read_checked(SCALER)?)
        .map_err(|e| Error::format(dir.join(SCALER), e.to_string()))?;

    let n = manifest.n_rooms;
    if features.len() != n * N_FEATURES || targets.len() != n * manifest.grid.len || t60.len() != n {
        return Err(Error::format(dir, "array sizes disagree with manifest"));
    }

    Ok(Dataset {
        manifest,
        features,
        targets,
        t60,
        splits,
        scaler,
    })
}
