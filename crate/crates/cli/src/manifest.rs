// SPDX-License-Identifier: Apache-2.0

//! Run directories and their manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sanet_core::{Error, Result};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one invocation. Artifact checksums cover every file in the run
/// directory except the manifest itself.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub created_at: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Relative path to lowercase hex SHA-256.
    pub artifacts: BTreeMap<String, String>,
}

/// The directory a run writes into, created on first use so that runs
/// rejected during validation leave nothing behind.
#[derive(Debug)]
pub struct RunDir {
    path: PathBuf,
    created: bool,
}

impl RunDir {
    pub fn new(out: Option<&Path>, command: &str, started: chrono::DateTime<chrono::Utc>) -> Self {
        let path = match out {
            Some(p) => p.to_path_buf(),
            None => PathBuf::from("runs").join(format!("{command}-{}", started.format("%Y%m%d-%H%M%S"))),
        };
        RunDir { path, created: false }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn is_created(&self) -> bool {
        self.created
    }

    /// Creates the run directory (if needed) and returns `rel` inside it,
    /// creating parent directories of `rel` as well.
    pub fn file(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let full = self.path.join(rel);
        let parent = full.parent().unwrap_or(&self.path).to_path_buf();
        std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        self.created = true;
        Ok(full)
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.file(rel)?;
        std::fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Checksums of every regular file under `root` (manifest excluded), keyed
/// by `/`-separated relative path.
pub fn checksum_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("walk stays under root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key != MANIFEST_FILE {
                out.insert(key, sha256_file(&path)?);
            }
        }
    }
    Ok(out)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
