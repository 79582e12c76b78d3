//! Re-runs the config recorded in a manifest and compares every output
//! byte for byte.

use std::fs;
use std::path::Path;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::manifest::Manifest;
use crate::output::{sha256_hex, Artifact};
use crate::run::compute;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mismatch {
    pub file: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub files_checked: usize,
    pub config_hash_matches: bool,
    /// First differing file in manifest order.
    pub mismatch: Option<Mismatch>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.config_hash_matches && self.mismatch.is_none()
    }
}

pub fn replay(manifest_path: &Path, workers: usize) -> Result<ReplayReport> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest = Manifest::parse(&text)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    replay_manifest(&manifest, Some(dir), workers)
}

/// Replays `manifest`; original files under `dir` (when present and
/// intact) are used to locate the first differing value.
pub fn replay_manifest(manifest: &Manifest, dir: Option<&Path>, workers: usize) -> Result<ReplayReport> {
    let cfg = ExperimentConfig::parse(&manifest.config)?;
    let output = compute(&cfg, workers)?;
    let mut report = ReplayReport {
        files_checked: 0,
        config_hash_matches: cfg.hash() == manifest.config_hash,
        mismatch: None,
    };
    for entry in &manifest.files {
        report.files_checked += 1;
        let Some(art) = output.artifacts.iter().find(|a| a.path == entry.path) else {
            report.mismatch = Some(Mismatch {
                file: entry.path.clone(),
                detail: "not produced by the replay".into(),
            });
            return Ok(report);
        };
        let got = art.sha256();
        if got != entry.sha256 {
            let original = dir
                .and_then(|d| fs::read(d.join(&entry.path)).ok())
                .filter(|b| sha256_hex(b) == entry.sha256);
            let detail = match original {
                Some(bytes) => first_difference(&entry.path, &bytes, &art.bytes),
                None => format!("sha256 expected {}, got {got}", entry.sha256),
            };
            report.mismatch = Some(Mismatch {
                file: entry.path.clone(),
                detail,
            });
            return Ok(report);
        }
    }
    if let Some(extra) = output
        .artifacts
        .iter()
        .find(|a: &&Artifact| !manifest.files.iter().any(|f| f.path == a.path))
    {
        report.mismatch = Some(Mismatch {
            file: extra.path.clone(),
            detail: "produced by the replay but not listed".into(),
        });
        return Ok(report);
    }
    if output.failures != manifest.failures {
        report.mismatch = Some(Mismatch {
            file: crate::manifest::FILE_NAME.into(),
            detail: format!(
                "failure records differ: expected {}, got {}",
                manifest.failures.len(),
                output.failures.len()
            ),
        });
    }
    Ok(report)
}

/// Describes the first difference between two renderings of `path`.
pub fn first_difference(path: &str, expected: &[u8], got: &[u8]) -> String {
    let (Ok(a), Ok(b)) = (std::str::from_utf8(expected), std::str::from_utf8(got)) else {
        let at = expected
            .iter()
            .zip(got)
            .position(|(x, y)| x != y)
            .unwrap_or(expected.len().min(got.len()));
        return format!("byte {at} differs (lengths {} and {})", expected.len(), got.len());
    };
    let header: Vec<&str> = if path.ends_with(".csv") {
        a.lines().next().map(|h| h.split(',').collect()).unwrap_or_default()
    } else {
        Vec::new()
    };
    let mut la = a.lines();
    let mut lb = b.lines();
    let mut line = 0;
    loop {
        line += 1;
        match (la.next(), lb.next()) {
            (None, None) => return "contents differ only in line endings".into(),
            (Some(x), None) => return format!("line {line}: expected `{x}`, replay ended"),
            (None, Some(y)) => return format!("line {line}: expected end of file, got `{y}`"),
            (Some(x), Some(y)) if x != y => {
                if !header.is_empty() && line > 1 {
                    let fa: Vec<&str> = x.split(',').collect();
                    let fb: Vec<&str> = y.split(',').collect();
                    if let Some(k) = (0..fa.len().max(fb.len())).find(|&k| fa.get(k) != fb.get(k)) {
                        let name = header.get(k).copied().unwrap_or("?");
                        return format!(
                            "line {line}, column `{name}`: expected {}, got {}",
                            fa.get(k).copied().unwrap_or("<missing>"),
                            fb.get(k).copied().unwrap_or("<missing>")
                        );
                    }
                }
                return format!("line {line}: expected `{}`, got `{}`", x.trim(), y.trim());
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_difference_names_the_column() {
        let a = b"t,w_l1\n0,1\n0.1,0.5\n";
        let b = b"t,w_l1\n0,1\n0.1,0.25\n";
        assert_eq!(
            first_difference("decay_seed1.csv", a, b),
            "line 3, column `w_l1`: expected 0.5, got 0.25"
        );
    }

    #[test]
    fn text_and_binary_differences() {
        assert_eq!(
            first_difference("summary.json", b"{\n  \"a\": 1\n}\n", b"{\n  \"a\": 2\n}\n"),
            "line 2: expected `\"a\": 1`, got `\"a\": 2`"
        );
        assert!(first_difference("x.csv", b"a\n", b"a\nb\n").contains("line 2"));
        assert!(first_difference("u.syns", &[0xff, 1, 2], &[0xff, 1, 3]).starts_with("byte 2"));
    }
}
