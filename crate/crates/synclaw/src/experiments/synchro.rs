//! Pair runs on a shared noise path: `‖w‖₁` decay, Lyapunov fit, kernel
//! mass loss and strict-contraction audits.

use serde::Serialize;
use synclaw_core::synchro::{
    estimate_lyapunov, kernel_mass_loss_frozen, kernel_time_error, strict_contraction_audit, FrozenLinearEvolution,
    PairTrajectory,
};
use synclaw_core::Error as CoreError;

use super::{fan_out, partition, snapshot_of, Context, ContractionRow, ExperimentOutput};
use crate::error::Result;
use crate::output::{line_plot, summary_json, Artifact, Csv, Series};

/// Relative slack on `‖w‖₁` monotonicity, scaled by `‖w₀‖₁`.
pub(crate) const MONOTONE_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub(crate) struct KernelRow {
    pub t: f64,
    pub h: f64,
    pub p_hat: f64,
    pub time_error: f64,
    pub argmax_cell: usize,
    pub contraction: ContractionRow,
}

#[derive(Debug, Clone, Serialize)]
pub(crate) struct SeedSummary {
    pub seed: u64,
    pub status: &'static str,
    pub lambda_hat: Option<f64>,
    pub lambda_stderr: Option<f64>,
    pub fit_start: Option<f64>,
    pub fit_end: Option<f64>,
    pub zero_hit: Option<f64>,
    pub w_l1_initial: f64,
    pub w_l1_final: f64,
    pub monotonicity_violations: usize,
    pub worst_relative_increase: f64,
    pub max_substeps: usize,
    pub kernel: Vec<KernelRow>,
}

#[derive(Debug, Clone, Serialize)]
struct Body {
    t_final: f64,
    dt: f64,
    seeds: Vec<SeedSummary>,
    lambda_all_negative: bool,
    lambda_mean: Option<f64>,
    lambda_std: Option<f64>,
    total_monotonicity_violations: usize,
    contraction_all_pass: bool,
}

/// Steps where `‖w‖₁` grows by more than the slack, and the worst growth
/// relative to `‖w₀‖₁`.
pub(crate) fn monotonicity(w: &[f64]) -> (usize, f64) {
    let scale = w.first().copied().unwrap_or(0.0);
    let mut count = 0;
    let mut worst = 0.0_f64;
    for pair in w.windows(2) {
        let inc = pair[1] - pair[0];
        if inc > MONOTONE_SLACK * scale {
            count += 1;
        }
        if scale > 0.0 {
            worst = worst.max(inc / scale);
        }
    }
    (count, worst)
}

fn analyse(ctx: &Context, seed: u64, pair: &PairTrajectory) -> synclaw_core::Result<SeedSummary> {
    let knobs = &ctx.cfg.synchro;
    let (status, fit) = match estimate_lyapunov(pair, knobs.t_burn) {
        Ok(f) => ("fitted", Some(f)),
        Err(CoreError::SynchronisedBelowResolution { .. }) => ("synchronised_below_resolution", None),
        Err(e) => return Err(e),
    };
    let (violations, worst) = monotonicity(&pair.w_l1);
    let mut kernel = Vec::new();
    for &t in &knobs.audit_t {
        for &h in &knobs.audit_h {
            if t + h > pair.horizon() + 0.5 * pair.dt {
                continue;
            }
            let evo = FrozenLinearEvolution::from_pair(pair, &ctx.model, t, h)?;
            let est = kernel_mass_loss_frozen(&evo)?;
            let time_error = kernel_time_error(&evo, &est)?;
            let audit = strict_contraction_audit(pair, t, h, est.p_hat)?;
            kernel.push(KernelRow {
                t,
                h,
                p_hat: est.p_hat,
                time_error,
                argmax_cell: est.argmax_cell,
                contraction: audit.into(),
            });
        }
    }
    Ok(SeedSummary {
        seed,
        status,
        lambda_hat: fit.map(|f| f.lambda_hat),
        lambda_stderr: fit.map(|f| f.stderr),
        fit_start: fit.map(|f| f.fit_start),
        fit_end: fit.map(|f| f.fit_end),
        zero_hit: fit.and_then(|f| f.zero_hit),
        w_l1_initial: pair.w_l1[0],
        w_l1_final: *pair.w_l1.last().unwrap_or(&0.0),
        monotonicity_violations: violations,
        worst_relative_increase: worst,
        max_substeps: pair.max_substeps,
        kernel,
    })
}

fn decay_csv(pair: &PairTrajectory) -> Vec<u8> {
    let mut csv = Csv::new(&[
        "t",
        "w_l1",
        "boundary_diss",
        "u_l1",
        "u_lp",
        "u_linf",
        "v_l1",
        "v_lp",
        "v_linf",
    ]);
    for j in 0..=pair.n_steps() {
        csv.row(&[
            pair.time(j),
            pair.w_l1[j],
            pair.boundary_diss[j],
            pair.u_norms.l1[j],
            pair.u_norms.lp[j],
            pair.u_norms.linf[j],
            pair.v_norms.l1[j],
            pair.v_norms.lp[j],
            pair.v_norms.linf[j],
        ]);
    }
    csv.into_bytes()
}

struct SeedRun {
    summary: SeedSummary,
    decay: Vec<u8>,
    snapshots: Option<(Vec<u8>, Vec<u8>)>,
    trace: Vec<(f64, f64)>,
}

pub(super) fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let cfg = ctx.cfg;
    let results = fan_out(&cfg.seeds, |seed| {
        let pair = ctx.pair_run(seed, cfg.solver.t_final, cfg.solver.stride)?;
        let summary = analyse(ctx, seed, &pair)?;
        let snapshots = if cfg.solver.snapshots {
            Some((
                snapshot_of(&pair.u_states, pair.stride, pair.dt)?,
                snapshot_of(&pair.v_states, pair.stride, pair.dt)?,
            ))
        } else {
            None
        };
        let trace = (0..=pair.n_steps())
            .step_by(pair.stride.max(1))
            .map(|j| (pair.time(j), pair.w_l1[j]))
            .collect();
        Ok(SeedRun {
            summary,
            decay: decay_csv(&pair),
            snapshots,
            trace,
        })
    });
    let (runs, failures) = partition(results, "synchro");

    let mut out = ExperimentOutput {
        failures,
        ..Default::default()
    };
    let mut series = Vec::new();
    let mut summaries = Vec::new();
    for (seed, run) in runs {
        out.artifacts
            .push(Artifact::new(format!("decay_seed{seed}.csv"), run.decay));
        if let Some((u, v)) = run.snapshots {
            out.artifacts.push(Artifact::new(format!("u_seed{seed}.syns"), u));
            out.artifacts.push(Artifact::new(format!("v_seed{seed}.syns"), v));
        }
        series.push(Series::new(format!("seed {seed}"), run.trace));
        summaries.push(run.summary);
    }

    let lambdas: Vec<f64> = summaries.iter().filter_map(|s| s.lambda_hat).collect();
    let (lambda_mean, lambda_std) = super::mean_std(&lambdas);
    let body = Body {
        t_final: cfg.solver.t_final,
        dt: cfg.solver.dt,
        lambda_all_negative: !summaries.is_empty() && summaries.iter().all(|s| s.lambda_hat.is_none_or(|l| l < 0.0)),
        lambda_mean,
        lambda_std,
        total_monotonicity_violations: summaries.iter().map(|s| s.monotonicity_violations).sum(),
        contraction_all_pass: summaries.iter().flat_map(|s| &s.kernel).all(|k| k.contraction.pass),
        seeds: summaries,
    };
    out.artifacts.push(Artifact::new(
        "summary.json",
        summary_json("synchro", &ctx.hash, &body)?,
    ));
    out.artifacts.push(Artifact::new(
        "decay.svg",
        line_plot("pair difference decay", "t", "||w||_1", &series, true),
    ));
    Ok(out)
}
