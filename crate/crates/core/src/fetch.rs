//! Dataset download and unpacking.
//!
//! Never called by reset or step. Sources come from a JSON table mapping a
//! dataset name to an archive URL, an optional pinned SHA-256 digest, the
//! directory inside the archive to extract, and the destination directory
//! name. `file://` URLs are read from disk. A finished download leaves a
//! `.complete` marker; later calls return the existing path without touching
//! the network.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const COMPLETE_MARKER: &str = ".complete";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    pub url: String,
    /// Lowercase hex digest of the archive, when pinned.
    pub sha256: Option<String>,
    /// Directory inside the archive whose contents are extracted.
    #[serde(default)]
    pub archive_root: Option<String>,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SourceTable(pub BTreeMap<String, DatasetSource>);

impl SourceTable {
    pub fn builtin() -> Self {
        serde_json::from_str(include_str!("../assets/datasets.json")).expect("builtin table parses")
    }

    pub fn from_file(path: &Path) -> Result<Self, FetchError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| FetchError::Table(e.to_string()))
    }

    pub fn get(&self, name: &str) -> Option<&DatasetSource> {
        self.0.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("unknown dataset \"{0}\"")]
    UnknownDatasetName(String),
    #[error("network failure: {0}")]
    NetworkFailure(String),
    #[error("digest mismatch: expected {expected}, got {actual}")]
    DigestMismatch { expected: String, actual: String },
    #[error("no pinned digest for \"{0}\"; pass one explicitly or allow unpinned downloads")]
    UnpinnedDigest(String),
    #[error("bad archive: {0}")]
    Archive(String),
    #[error("bad source table: {0}")]
    Table(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct FetchOptions {
    /// Overrides the table's digest.
    pub sha256: Option<String>,
    /// Accept an archive with no digest to check against.
    pub allow_unpinned: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn download(url: &str) -> Result<Vec<u8>, FetchError> {
    if let Some(path) = url.strip_prefix("file://") {
        return std::fs::read(path).map_err(|e| FetchError::NetworkFailure(format!("{url}: {e}")));
    }
    http_get(url)
}

#[cfg(feature = "download")]
fn http_get(url: &str) -> Result<Vec<u8>, FetchError> {
    let resp = ureq::get(url).call().map_err(|e| FetchError::NetworkFailure(e.to_string()))?;
    let mut buf = Vec::new();
    resp.into_reader()
        .read_to_end(&mut buf)
        .map_err(|e| FetchError::NetworkFailure(e.to_string()))?;
    Ok(buf)
}

#[cfg(not(feature = "download"))]
fn http_get(url: &str) -> Result<Vec<u8>, FetchError> {
    Err(FetchError::NetworkFailure(format!("{url}: built without the download feature")))
}

/// Path of `entry` relative to `root`, or `None` when it lies outside.
fn relative_to(entry: &Path, root: Option<&str>) -> Option<PathBuf> {
    let rel = match root {
        Some(r) => entry.strip_prefix(r.trim_end_matches('/')).ok()?,
        None => entry,
    };
    rel.components().all(|c| matches!(c, Component::Normal(_))).then(|| rel.to_path_buf())
}

fn unpack(bytes: &[u8], root: Option<&str>, into: &Path) -> Result<usize, FetchError> {
    let gz = flate2::read::GzDecoder::new(bytes);
    let mut archive = tar::Archive::new(gz);
    let mut files = 0;
    let entries = archive.entries().map_err(|e| FetchError::Archive(e.to_string()))?;
    for entry in entries {
        let mut entry = entry.map_err(|e| FetchError::Archive(e.to_string()))?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let path = entry.path().map_err(|e| FetchError::Archive(e.to_string()))?.into_owned();
        let Some(rel) = relative_to(&path, root) else { continue };
        if rel.as_os_str().is_empty() {
            continue;
        }
        let dest = into.join(&rel);
        if let Some(parent) = dest.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut data = Vec::new();
        entry.read_to_end(&mut data).map_err(|e| FetchError::Archive(e.to_string()))?;
        std::fs::write(dest, data)?;
        files += 1;
    }
    if files == 0 {
        return Err(FetchError::Archive(format!(
            "no files under {}",
            root.unwrap_or("the archive root")
        )));
    }
    Ok(files)
}

/// Downloads, verifies and unpacks `name` into `destination/<dir>`.
pub fn fetch_dataset(
    name: &str,
    destination: &Path,
    table: &SourceTable,
    opts: &FetchOptions,
) -> Result<PathBuf, FetchError> {
    let src = table.get(name).ok_or_else(|| FetchError::UnknownDatasetName(name.to_string()))?;
    let target = destination.join(&src.dir);
    if target.join(COMPLETE_MARKER).is_file() {
        return Ok(target);
    }
    let expected = opts.sha256.clone().or_else(|| src.sha256.clone()).map(|d| d.to_lowercase());
    if expected.is_none() && !opts.allow_unpinned {
        return Err(FetchError::UnpinnedDigest(name.to_string()));
    }
    let bytes = download(&src.url)?;
    let actual = sha256_hex(&bytes);
    if let Some(expected) = expected {
        if expected != actual {
            return Err(FetchError::DigestMismatch { expected, actual });
        }
    }
    let staging = destination.join(format!(".{}.partial", src.dir));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    if let Err(e) = unpack(&bytes, src.archive_root.as_deref(), &staging) {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    std::fs::write(staging.join(COMPLETE_MARKER), format!("{actual}\n"))?;
    if target.exists() {
        std::fs::remove_dir_all(&target)?;
    }
    std::fs::rename(&staging, &target)?;
    Ok(target)
}
