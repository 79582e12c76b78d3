//! Closed-form checks with `A ≡ 0` and no noise: heat decay, refinement
//! ladders, the linear Lyapunov exponent and drift constant, and both exit
//! probability estimators against the Dirichlet heat kernel.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use synclaw_core::exit::{estimate_p_inf_with, DriftField};
use synclaw_core::noise::NoisePath;
use synclaw_core::solver::{evolve, lp_drift_fit, SolverConfig, Trajectory};
use synclaw_core::stats::linear_fit;
use synclaw_core::synchro::{
    couple_evolve, estimate_lyapunov, kernel_mass_loss_frozen, kernel_time_error, FrozenLinearEvolution,
};
use synclaw_core::{Field, FluxModel, Grid, NoiseSpec};

use super::{Context, ExperimentOutput};
use crate::error::Result;
use crate::manifest::Failure;
use crate::output::{line_plot, summary_json, Artifact, Csv, Series};

pub const HEAT_TOLERANCE: f64 = 0.05;
pub const LAMBDA_TOLERANCE: f64 = 0.05;
pub const DRIFT_TOLERANCE: f64 = 0.10;
pub const MIN_DT_ORDER: f64 = 0.9;
pub const MIN_DX_ORDER: f64 = 1.8;
/// Relative tolerance of the kernel against the series value.
pub const KERNEL_TOLERANCE: f64 = 0.01;

pub const LADDER_DTS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
pub const LADDER_CELLS: [usize; 4] = [8, 16, 32, 64];
const LADDER_T: f64 = 0.1;
const LADDER_FINE_DT: f64 = 1e-6;
const EXIT_H: f64 = 0.1;

/// `∫₀ᴸ Γ_h(x, y) dx` for the Dirichlet heat kernel on `(0, L)`.
pub fn heat_mass(y: f64, h: f64, length: f64) -> f64 {
    (1..4000)
        .step_by(2)
        .map(|k| {
            let k = k as f64;
            4.0 / (k * PI) * (k * PI * y / length).sin() * (-(k * PI / length).powi(2) * h).exp()
        })
        .sum()
}

/// Heat run from `sin(πx/L)`; `stride = 0` keeps only the first and last states.
fn heat_run(grid: Grid, dt: f64, t_final: f64, stride: usize) -> synclaw_core::Result<Trajectory> {
    let spec = NoiseSpec::none();
    let mut cfg = SolverConfig::new(dt, t_final);
    cfg.stride = if stride == 0 { cfg.n_steps().max(1) } else { stride };
    cfg.norm_p = 2.0;
    let path = NoisePath::sample(&spec, 0, dt, cfg.n_steps())?;
    let l = grid.length();
    let u0 = Field::from_fn(grid, |x| (PI * x / l).sin());
    evolve(&u0, &FluxModel::zero(), &spec, &path, &cfg)
}

/// Max-norm error at `t` against `e^{−κt} sin(πx/L)`.
fn max_error(traj: &Trajectory, kappa: f64) -> f64 {
    let j = traj.n_steps();
    let t = traj.time(j);
    let u = traj.states.last().expect("final state stored");
    let l = traj.grid.length();
    u.values()
        .iter()
        .zip(traj.grid.centers())
        .map(|(&v, x)| (v - (-kappa * t).exp() * (PI * x / l).sin()).abs())
        .fold(0.0, f64::max)
}

/// `(2/dx²)(1 − cos(π dx/L))`, the discrete first eigenvalue.
fn discrete_eigenvalue(grid: &Grid) -> f64 {
    let dx = grid.dx();
    2.0 / (dx * dx) * (1.0 - (PI * dx / grid.length()).cos())
}

#[derive(Debug, Clone, Serialize)]
struct Rung {
    dt: f64,
    n_cells: usize,
    max_error: f64,
}

#[derive(Debug, Clone, Serialize)]
struct Check {
    value: f64,
    expected: f64,
    relative_error: f64,
    tolerance: f64,
    pass: bool,
}

impl Check {
    fn relative(value: f64, expected: f64, tolerance: f64) -> Self {
        let relative_error = ((value - expected) / expected).abs();
        Self {
            value,
            expected,
            relative_error,
            tolerance,
            pass: relative_error <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct ExitCheck {
    h: f64,
    exact: f64,
    kernel_p_hat: f64,
    kernel_time_error: f64,
    kernel_pass: bool,
    mc_p_hat: f64,
    mc_stderr: f64,
    mc_pass: bool,
}

#[derive(Debug, Clone, Serialize)]
struct Body {
    heat_decay: Option<Check>,
    dt_ladder: Vec<Rung>,
    dt_order: Option<f64>,
    dt_order_pass: bool,
    dx_ladder: Vec<Rung>,
    dx_order: Option<f64>,
    dx_order_pass: bool,
    linear_lambda: Option<Check>,
    linear_drift_c1: Option<Check>,
    exit: Option<ExitCheck>,
    all_pass: bool,
}

fn order(rungs: &[Rung], step: impl Fn(&Rung) -> f64) -> synclaw_core::Result<f64> {
    let x: Vec<f64> = rungs.iter().map(|r| step(r).ln()).collect();
    let y: Vec<f64> = rungs.iter().map(|r| r.max_error.ln()).collect();
    Ok(linear_fit(&x, &y)?.slope)
}

fn note<T>(failures: &mut Vec<Failure>, task: &str, r: synclaw_core::Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            failures.push(Failure {
                seed: None,
                task: task.into(),
                error: e.to_string(),
            });
            None
        }
    }
}

fn exit_check(ctx: &Context) -> synclaw_core::Result<ExitCheck> {
    let grid = ctx.grid;
    let l = grid.length();
    let sc = ctx.cfg.solver_config();
    let n = (EXIT_H / sc.dt).round() as usize;
    let evo = FrozenLinearEvolution::from_cell_speeds(&grid, sc.dt, n, 0.0, |_| vec![0.0; grid.n_cells()])?;
    let kernel = kernel_mass_loss_frozen(&evo)?;
    let kerr = kernel_time_error(&evo, &kernel)?;
    let exact_kernel = 1.0 - heat_mass(grid.center(kernel.argmax_cell), EXIT_H, l);
    let exact = 1.0 - heat_mass(0.5 * l, EXIT_H, l);
    let drift = DriftField::constant(l, grid.n_cells(), 0.0);
    let seed = ctx.cfg.seeds.first().copied().unwrap_or(0);
    let mc = estimate_p_inf_with(&drift, EXIT_H, 1, ctx.cfg.exitprob.n_paths, EXIT_H / 200.0, seed)?;
    Ok(ExitCheck {
        h: EXIT_H,
        exact,
        kernel_p_hat: kernel.p_hat,
        kernel_time_error: kerr,
        kernel_pass: ((kernel.p_hat - exact_kernel) / exact_kernel).abs() <= KERNEL_TOLERANCE,
        mc_p_hat: mc.p_hat,
        mc_stderr: mc.stderr,
        mc_pass: (mc.p_hat - exact).abs() <= 3.0 * mc.stderr,
    })
}

pub(super) fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let cfg = ctx.cfg;
    let grid = ctx.grid;
    let l = grid.length();
    let mode = (PI / l).powi(2);
    let mut out = ExperimentOutput::default();
    let mut failures = Vec::new();

    let heat = note(
        &mut failures,
        "heat",
        heat_run(grid, cfg.solver.dt, cfg.solver.t_final, cfg.solver.stride),
    );
    let mut heat_csv = Csv::new(&["t", "l2", "exact_l2", "relative_error"]);
    let mut curves = vec![Series::new("computed", Vec::new()), Series::new("exact", Vec::new())];
    let heat_decay = heat.as_ref().map(|h| {
        for j in 0..=h.n_steps() {
            let t = h.time(j);
            let exact = h.l2[0] * (-mode * t).exp();
            heat_csv.row(&[t, h.l2[j], exact, ((h.l2[j] - exact) / exact).abs()]);
            curves[0].points.push((t, h.l2[j]));
            curves[1].points.push((t, exact));
        }
        let j = h.n_steps();
        Check::relative(h.l2[j], h.l2[0] * (-mode * h.time(j)).exp(), HEAT_TOLERANCE)
    });
    let linear_drift_c1 = heat.as_ref().and_then(|h| {
        let series: Vec<f64> = h.l2.iter().map(|v| v * v).collect();
        note(&mut failures, "linear_drift", lp_drift_fit(&series, h.dt))
            .map(|f| Check::relative(f.c1, 2.0 * mode, DRIFT_TOLERANCE))
    });

    let dt_runs: Vec<_> = LADDER_DTS
        .par_iter()
        .map(|&dt| {
            heat_run(grid, dt, LADDER_T, 0).map(|t| Rung {
                dt,
                n_cells: grid.n_cells(),
                max_error: max_error(&t, discrete_eigenvalue(&grid)),
            })
        })
        .collect();
    let dx_runs: Vec<_> = LADDER_CELLS
        .par_iter()
        .map(|&n| {
            let g = Grid::new(l, n)?;
            heat_run(g, LADDER_FINE_DT, LADDER_T, 0).map(|t| Rung {
                dt: LADDER_FINE_DT,
                n_cells: n,
                max_error: max_error(&t, mode),
            })
        })
        .collect();
    let dt_ladder: Vec<Rung> = dt_runs
        .into_iter()
        .filter_map(|r| note(&mut failures, "dt_ladder", r))
        .collect();
    let dx_ladder: Vec<Rung> = dx_runs
        .into_iter()
        .filter_map(|r| note(&mut failures, "dx_ladder", r))
        .collect();
    let dt_order = if dt_ladder.len() == LADDER_DTS.len() {
        note(&mut failures, "dt_order", order(&dt_ladder, |r| r.dt))
    } else {
        None
    };
    let dx_order = if dx_ladder.len() == LADDER_CELLS.len() {
        note(&mut failures, "dx_order", order(&dx_ladder, |r| l / r.n_cells as f64))
    } else {
        None
    };

    let linear_lambda = {
        let sc = cfg.solver_config();
        let spec = NoiseSpec::none();
        let pair = NoisePath::sample(&spec, 0, sc.dt, sc.n_steps()).and_then(|path| {
            let (u0, v0) = ctx.initial_pair(0);
            let mut c = sc;
            c.stride = usize::MAX;
            couple_evolve(&u0, &v0, &FluxModel::zero(), &spec, &path, &c)
        });
        note(
            &mut failures,
            "linear_lambda",
            pair.and_then(|p| estimate_lyapunov(&p, 0.25 * p.horizon())),
        )
        .map(|f| Check::relative(f.lambda_hat, -mode, LAMBDA_TOLERANCE))
    };

    let exit = note(&mut failures, "exit", exit_check(ctx));

    let mut ladder = Csv::new(&["dt", "n_cells", "max_error"]);
    for r in dt_ladder.iter().chain(&dx_ladder) {
        ladder.row(&[r.dt, r.n_cells as f64, r.max_error]);
    }
    let dt_order_pass = dt_order.is_some_and(|o| o >= MIN_DT_ORDER);
    let dx_order_pass = dx_order.is_some_and(|o| o >= MIN_DX_ORDER);
    let all_pass = failures.is_empty()
        && heat_decay.as_ref().is_some_and(|c| c.pass)
        && dt_order_pass
        && dx_order_pass
        && linear_lambda.as_ref().is_some_and(|c| c.pass)
        && linear_drift_c1.as_ref().is_some_and(|c| c.pass)
        && exit.as_ref().is_some_and(|e| e.kernel_pass && e.mc_pass);
    let body = Body {
        heat_decay,
        dt_ladder,
        dt_order,
        dt_order_pass,
        dx_ladder,
        dx_order,
        dx_order_pass,
        linear_lambda,
        linear_drift_c1,
        exit,
        all_pass,
    };
    out.failures = failures;
    out.artifacts
        .push(Artifact::new("heat_trajectory.csv", heat_csv.into_bytes()));
    out.artifacts.push(Artifact::new("ladder.csv", ladder.into_bytes()));
    out.artifacts
        .push(Artifact::new("summary.json", summary_json("oracle", &ctx.hash, &body)?));
    out.artifacts.push(Artifact::new(
        "heat_decay.svg",
        line_plot("heat decay", "t", "||u||_2", &curves, true),
    ));
    Ok(out)
}
