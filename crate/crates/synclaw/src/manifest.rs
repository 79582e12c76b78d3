//! Run manifest: the canonical config, its hash, and every emitted file
//! with its SHA-256.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const FILE_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: Option<u64>,
    pub task: String,
    pub error: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub manifest_version: u32,
    pub tool: String,
    pub experiment: String,
    pub config_hash: String,
    /// Canonical config text the run was made from.
    pub config: String,
    pub status: RunStatus,
    pub files: Vec<FileEntry>,
    pub failures: Vec<Failure>,
}

impl Manifest {
    /// Parses and checks structure: version, hash format, safe relative
    /// paths, no duplicates. Does not touch the file system.
    pub fn parse(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<()> {
        if self.manifest_version != MANIFEST_VERSION {
            return Err(Error::Manifest(format!(
                "unsupported manifest_version {} (this build reads {MANIFEST_VERSION})",
                self.manifest_version
            )));
        }
        if !is_sha256(&self.config_hash) {
            return Err(Error::Manifest(format!(
                "config_hash `{}` is not a SHA-256 hex digest",
                self.config_hash
            )));
        }
        let mut seen = BTreeSet::new();
        for f in &self.files {
            if !is_safe_relative(&f.path) {
                return Err(Error::Manifest(format!(
                    "file path `{}` is not a plain relative path",
                    f.path
                )));
            }
            if f.path == FILE_NAME {
                return Err(Error::Manifest("the manifest cannot list itself".into()));
            }
            if !is_sha256(&f.sha256) {
                return Err(Error::Manifest(format!(
                    "hash of `{}` is not a SHA-256 hex digest",
                    f.path
                )));
            }
            if !seen.insert(f.path.as_str()) {
                return Err(Error::Manifest(format!("file `{}` is listed twice", f.path)));
            }
        }
        if self.status == RunStatus::Complete && !self.failures.is_empty() {
            return Err(Error::Manifest("a complete run cannot carry failures".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(self)?;
        v.push(b'\n');
        Ok(v)
    }
}

fn is_sha256(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

fn is_safe_relative(p: &str) -> bool {
    !p.is_empty()
        && !p.starts_with('/')
        && !p.contains('\\')
        && !p.contains(':')
        && p.split('/').all(|c| !c.is_empty() && c != "." && c != "..")
}
