//! The five canned experiments. Each one computes everything in memory and
//! returns its artifacts in a fixed order; per-seed work fans out over the
//! current rayon pool and is folded back in seed order.

mod excursions;
mod exitprob;
mod oracle;
mod supersolution;
mod synchro;

use rayon::prelude::*;
use serde::Serialize;
use synclaw_core::noise::NoisePath;
use synclaw_core::snapshot::Snapshot;
use synclaw_core::synchro::{couple_evolve, PairTrajectory};
use synclaw_core::{Field, FluxModel, Grid, NoiseSpec};

use crate::config::{Experiment, ExperimentConfig};
use crate::error::Result;
use crate::manifest::Failure;
use crate::output::Artifact;

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutput {
    pub artifacts: Vec<Artifact>,
    pub failures: Vec<Failure>,
}

pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let ctx = Context::new(cfg)?;
    match cfg.experiment {
        Experiment::Synchro => synchro::run(&ctx),
        Experiment::Supersolution => supersolution::run(&ctx),
        Experiment::Exitprob => exitprob::run(&ctx),
        Experiment::Excursions => excursions::run(&ctx),
        Experiment::Oracle => oracle::run(&ctx),
    }
}

pub(crate) struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    pub grid: Grid,
    pub model: FluxModel,
    pub spec: NoiseSpec,
    pub hash: String,
}

impl<'a> Context<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            grid: cfg.grid()?,
            model: cfg.flux_model()?,
            spec: cfg.noise_spec(),
            hash: cfg.hash(),
        })
    }

    pub fn initial_pair(&self, seed: u64) -> (Field, Field) {
        (
            self.cfg.initial.u.field(self.grid, seed, 0),
            self.cfg.initial.v.field(self.grid, seed, 1),
        )
    }

    /// Pair run on `[0, t_final]` with states kept every `stride` steps.
    pub fn pair_run(&self, seed: u64, t_final: f64, stride: usize) -> synclaw_core::Result<PairTrajectory> {
        let mut sc = self.cfg.solver_config();
        sc.t_final = t_final;
        sc.stride = stride;
        let path = NoisePath::sample(&self.spec, seed, sc.dt, sc.n_steps())?;
        let (u0, v0) = self.initial_pair(seed);
        couple_evolve(&u0, &v0, &self.model, &self.spec, &path, &sc)
    }
}

/// Runs `task` for every seed in parallel; results come back in seed order.
pub(crate) fn fan_out<T: Send>(
    seeds: &[u64],
    task: impl Fn(u64) -> synclaw_core::Result<T> + Sync,
) -> Vec<(u64, synclaw_core::Result<T>)> {
    seeds.par_iter().map(|&s| (s, task(s))).collect()
}

/// Splits fan-out results into successes and failure records.
pub(crate) fn partition<T>(results: Vec<(u64, synclaw_core::Result<T>)>, task: &str) -> (Vec<(u64, T)>, Vec<Failure>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(v) => ok.push((seed, v)),
            Err(e) => failed.push(Failure {
                seed: Some(seed),
                task: task.to_string(),
                error: e.to_string(),
            }),
        }
    }
    (ok, failed)
}

pub(crate) fn snapshot_of(states: &[Field], stride: usize, dt: f64) -> synclaw_core::Result<Vec<u8>> {
    let n = states.first().map_or(0, |f| f.len());
    let mut snap = Snapshot::new(n);
    for (k, f) in states.iter().enumerate() {
        snap.push((k * stride) as f64 * dt, f.values())?;
    }
    snap.encode()
}

/// Report of one strict-contraction audit.
#[derive(Debug, Clone, Serialize)]
pub(crate) struct ContractionRow {
    pub pass: bool,
    pub w_start: f64,
    pub w_end: f64,
    pub ratio: f64,
    /// `1 − p̂ + tol`.
    pub allowed_ratio: f64,
    pub tol: f64,
}

impl From<synclaw_core::synchro::ContractionAudit> for ContractionRow {
    fn from(a: synclaw_core::synchro::ContractionAudit) -> Self {
        Self {
            pass: a.pass,
            w_start: a.w_start,
            w_end: a.w_end,
            ratio: a.ratio,
            allowed_ratio: 1.0 - a.p_hat + a.tol,
            tol: a.tol,
        }
    }
}

pub(crate) fn mean_std(v: &[f64]) -> (Option<f64>, Option<f64>) {
    if v.is_empty() {
        return (None, None);
    }
    let m = synclaw_core::stats::mean(v);
    let s = if v.len() > 1 {
        Some(synclaw_core::stats::std_dev(v))
    } else {
        None
    };
    (Some(m), s)
}
