//! Run manifests: the effective command line plus content hashes of every
//! input and output, enough to re-run a command and check the result.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub tool: String,
    pub command: String,
    /// Effective arguments after config merging, without the program name.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    /// Resolved options echoed for reference.
    pub options: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn hash_entry(path: &Path) -> Result<FileHash, CliError> {
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}

/// `<out>.manifest.json` next to the primary output.
pub fn path_for(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    primary.with_file_name(name)
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let m: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::MissingInput(format!("{}: malformed manifest: {e}", path.display())))?;
        if m.version != MANIFEST_VERSION {
            return Err(CliError::Usage(format!(
                "{}: manifest version {} not supported",
                path.display(),
                m.version
            )));
        }
        Ok(m)
    }
}
