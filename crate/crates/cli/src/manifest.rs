//! Per-stage run manifests: content hashes of inputs and outputs plus the
//! configuration and seeds that produced them.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the pipeline root when the file lives under it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub notes: BTreeMap<String, serde_json::Value>,
}

fn hash_file(path: &Path, hasher: &mut Sha256) -> std::io::Result<()> {
    let mut f = fs::File::open(path)?;
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        hasher.update(&buf[..n]);
    }
}

fn hash_tree(path: &Path, rel: &str, hasher: &mut Sha256) -> std::io::Result<()> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = fs::read_dir(path)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        entries.sort();
        for e in entries {
            let name = e.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            if name.ends_with(".tmp") {
                continue;
            }
            hash_tree(&e, &format!("{rel}/{name}"), hasher)?;
        }
        Ok(())
    } else {
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        let mut inner = Sha256::new();
        hash_file(path, &mut inner)?;
        hasher.update(inner.finalize());
        Ok(())
    }
}

/// SHA-256 of a file's bytes, or of a directory's sorted (name, file hash) pairs.
pub fn sha256_of(path: &Path) -> Result<String, CliError> {
    let err = |e: std::io::Error| CliError::Data(format!("cannot hash {}: {e}", path.display()));
    if path.is_dir() {
        let mut h = Sha256::new();
        hash_tree(path, "", &mut h).map_err(err)?;
        Ok(hex::encode(h.finalize()))
    } else {
        let mut h = Sha256::new();
        hash_file(path, &mut h).map_err(err)?;
        Ok(hex::encode(h.finalize()))
    }
}

pub fn digest(path: &Path, root: &Path) -> Result<FileDigest, CliError> {
    let shown = path.strip_prefix(root).unwrap_or(path);
    Ok(FileDigest {
        path: shown.to_string_lossy().into_owned(),
        sha256: sha256_of(path)?,
    })
}
