//! Boundary dissipation two ways: mass loss of the frozen linear kernel and
//! Monte Carlo exit times of the characteristic SDE, against the closed-form
//! lower bound.

use serde::Serialize;
use synclaw_core::exit::{bound_audit, estimate_p_inf, GirsanovBound, NUMERICALLY_ZERO};
use synclaw_core::synchro::{
    kernel_mass_loss_frozen, kernel_time_error, strict_contraction_audit, FrozenLinearEvolution, PairTrajectory,
};

use super::{fan_out, partition, Context, ContractionRow, ExperimentOutput};
use crate::error::Result;
use crate::output::{line_plot, summary_json, Artifact, Csv, Series};

/// Agreement threshold in units of the combined error.
pub const AGREEMENT_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Serialize)]
pub(crate) struct WindowRow {
    pub t: f64,
    pub h: f64,
    pub kernel_p_hat: f64,
    pub kernel_time_error: f64,
    pub mc_p_hat: f64,
    pub mc_stderr: f64,
    pub mc_argmin_start: f64,
    pub combined_error: f64,
    /// `|kernel − mc| / combined_error`.
    pub discrepancy_sigmas: f64,
    pub agree: bool,
    pub b_sup: f64,
    pub bound: f64,
    pub bound_numerically_zero: bool,
    pub kernel_above_bound: bool,
    pub mc_above_bound: bool,
    pub contraction: ContractionRow,
}

#[derive(Debug, Clone, Serialize)]
struct SeedSummary {
    seed: u64,
    windows: Vec<WindowRow>,
}

#[derive(Debug, Clone, Serialize)]
struct Body {
    n_paths: usize,
    n_starts: usize,
    agreement_sigmas: f64,
    seeds: Vec<SeedSummary>,
    all_agree: bool,
    all_above_bound: bool,
    contraction_all_pass: bool,
}

/// `sup |B|` over the window, from the pair's sup norms.
fn window_b_sup(ctx: &Context, pair: &PairTrajectory, t: f64, h: f64) -> f64 {
    let j0 = pair.step_of(t);
    let j1 = pair.step_of(t + h).min(pair.n_steps());
    let m = pair.sup_norms[j0..=j1].iter().copied().fold(0.0, f64::max);
    ctx.model.lipschitz_bound_on(-m, m)
}

struct SeedRun {
    summary: SeedSummary,
    csv: Vec<u8>,
}

fn seed_run(ctx: &Context, seed: u64) -> synclaw_core::Result<SeedRun> {
    let cfg = ctx.cfg;
    let knobs = &cfg.exitprob;
    let pair = ctx.pair_run(seed, cfg.solver.t_final, cfg.solver.stride)?;
    let girsanov = GirsanovBound::for_interval(ctx.grid.length());
    let mut csv = Csv::new(&["t", "h", "start", "mc_exit", "kernel_exit"]);
    let mut windows = Vec::new();
    for &t in &knobs.t {
        for &h in &knobs.h {
            if t + h > pair.horizon() + 0.5 * pair.dt {
                continue;
            }
            let evo = FrozenLinearEvolution::from_pair(&pair, &ctx.model, t, h)?;
            let kernel = kernel_mass_loss_frozen(&evo)?;
            let kerr = kernel_time_error(&evo, &kernel)?;
            let mc = estimate_p_inf(
                &pair,
                &ctx.model,
                t,
                h,
                knobs.n_starts,
                knobs.n_paths,
                seed,
                knobs.sde_dt,
            )?;
            let b_sup = window_b_sup(ctx, &pair, t, h);
            let bound = girsanov.bound(h, b_sup)?;
            let mc_audit = bound_audit(&mc, bound);
            let combined = (mc.stderr * mc.stderr + kerr * kerr).sqrt();
            let diff = (kernel.p_hat - mc.p_hat).abs();
            let sigmas = if combined > 0.0 {
                diff / combined
            } else if diff == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            let audit = strict_contraction_audit(&pair, t, h, kernel.p_hat)?;
            for (i, &y) in mc.start_points.iter().enumerate() {
                let cell = ctx.grid.cell_of(y);
                csv.row(&[t, h, y, mc.fractions[i], 1.0 - kernel.masses[cell]]);
            }
            windows.push(WindowRow {
                t,
                h,
                kernel_p_hat: kernel.p_hat,
                kernel_time_error: kerr,
                mc_p_hat: mc.p_hat,
                mc_stderr: mc.stderr,
                mc_argmin_start: mc.argmin_start(),
                combined_error: combined,
                discrepancy_sigmas: sigmas,
                agree: diff <= AGREEMENT_SIGMAS * combined,
                b_sup,
                bound,
                bound_numerically_zero: bound < NUMERICALLY_ZERO,
                kernel_above_bound: kernel.p_hat + kerr >= bound || bound < NUMERICALLY_ZERO,
                mc_above_bound: mc_audit.pass,
                contraction: audit.into(),
            });
        }
    }
    Ok(SeedRun {
        summary: SeedSummary { seed, windows },
        csv: csv.into_bytes(),
    })
}

pub(super) fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let cfg = ctx.cfg;
    let (runs, failures) = partition(fan_out(&cfg.seeds, |seed| seed_run(ctx, seed)), "exitprob");
    let mut out = ExperimentOutput {
        failures,
        ..Default::default()
    };
    let mut seeds = Vec::new();
    for (seed, run) in runs {
        out.artifacts
            .push(Artifact::new(format!("exit_seed{seed}.csv"), run.csv));
        seeds.push(run.summary);
    }
    let rows: Vec<&WindowRow> = seeds.iter().flat_map(|s| &s.windows).collect();
    let mut series = vec![
        Series::new("kernel", Vec::new()),
        Series::new("monte carlo", Vec::new()),
        Series::new("bound", Vec::new()),
    ];
    for r in &rows {
        series[0].points.push((r.h, r.kernel_p_hat));
        series[1].points.push((r.h, r.mc_p_hat));
        series[2].points.push((r.h, r.bound.max(1e-300)));
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let body = Body {
        n_paths: cfg.exitprob.n_paths,
        n_starts: cfg.exitprob.n_starts,
        agreement_sigmas: AGREEMENT_SIGMAS,
        all_agree: !rows.is_empty() && rows.iter().all(|r| r.agree),
        all_above_bound: !rows.is_empty() && rows.iter().all(|r| r.kernel_above_bound && r.mc_above_bound),
        contraction_all_pass: !rows.is_empty() && rows.iter().all(|r| r.contraction.pass),
        seeds,
    };
    out.artifacts.push(Artifact::new(
        "summary.json",
        summary_json("exitprob", &ctx.hash, &body)?,
    ));
    out.artifacts.push(Artifact::new(
        "p_vs_bound.svg",
        line_plot("exit probability vs bound", "h", "p", &series, true),
    ));
    Ok(out)
}
