//! Executes a config on a worker pool and writes the run directory.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiments::{execute, ExperimentOutput};
use crate::manifest::{FileEntry, Manifest, RunStatus, FILE_NAME, MANIFEST_VERSION};

/// Directory that relative `output_dir` values are resolved against.
pub const OUTPUT_ROOT_ENV: &str = "SYNCLAW_OUTPUT_ROOT";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Overrides the config's output directory.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn is_complete(&self) -> bool {
        self.manifest.status == RunStatus::Complete
    }
}

pub fn tool_id() -> String {
    format!("synclaw {}", env!("CARGO_PKG_VERSION"))
}

pub fn resolve_output_dir(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> PathBuf {
    match out_dir {
        Some(d) => d.to_path_buf(),
        None => {
            let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
            root.join(&cfg.output_dir)
        }
    }
}

/// Runs the experiment in memory on a dedicated pool of `workers` threads.
pub fn compute(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Pool {
            workers,
            message: e.to_string(),
        })?;
    pool.install(|| execute(cfg))
}

pub fn build_manifest(cfg: &ExperimentConfig, output: &ExperimentOutput) -> Manifest {
    Manifest {
        manifest_version: MANIFEST_VERSION,
        tool: tool_id(),
        experiment: cfg.experiment.name().to_string(),
        config_hash: cfg.hash(),
        config: cfg.to_text(),
        status: if output.failures.is_empty() {
            RunStatus::Complete
        } else {
            RunStatus::Partial
        },
        files: output
            .artifacts
            .iter()
            .map(|a| FileEntry {
                path: a.path.clone(),
                sha256: a.sha256(),
                bytes: a.bytes.len() as u64,
            })
            .collect(),
        failures: output.failures.clone(),
    }
}

pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let output = compute(cfg, opts.workers)?;
    let dir = resolve_output_dir(cfg, opts.out_dir.as_deref());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for a in &output.artifacts {
        let path = dir.join(&a.path);
        fs::write(&path, &a.bytes).map_err(|e| Error::io(&path, e))?;
    }
    let manifest = build_manifest(cfg, &output);
    manifest.check()?;
    let path = dir.join(FILE_NAME);
    fs::write(&path, manifest.to_json()?).map_err(|e| Error::io(&path, e))?;
    Ok(RunOutcome { dir, manifest })
}
