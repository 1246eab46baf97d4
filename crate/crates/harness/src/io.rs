//! Versioned JSON documents, atomic writes and the scratch directory.

use std::path::{Path, PathBuf};

use scuc_core::model::FORMAT_VERSION;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: unsupported format_version {found:?}")]
    Version { path: PathBuf, found: String },
    #[error("{0}")]
    Model(#[from] scuc_core::model::ModelError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

/// A document body tagged with `format_version`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub format_version: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Versioned<T> {
    pub fn new(body: T) -> Self {
        Self { format_version: FORMAT_VERSION.to_string(), body }
    }
}

pub fn to_json<T: Serialize>(body: &T) -> String {
    serde_json::to_string_pretty(&Versioned::new(body)).expect("document serializes")
}

/// Writes `contents` to `path` through a sibling temporary file and rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, body: &T) -> Result<()> {
    write_atomic(path, to_json(body).as_bytes())
}

/// Reads a versioned document, rejecting any other `format_version`.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    let doc: Versioned<T> =
        serde_json::from_slice(&bytes).map_err(|source| HarnessError::Json { path: path.to_path_buf(), source })?;
    if doc.format_version != FORMAT_VERSION {
        return Err(HarnessError::Version { path: path.to_path_buf(), found: doc.format_version });
    }
    Ok(doc.body)
}

/// Scratch root: `GO3_TMPDIR` when set, else the system temp directory.
pub fn scratch_root() -> PathBuf {
    std::env::var_os("GO3_TMPDIR").map(PathBuf::from).unwrap_or_else(std::env::temp_dir)
}
