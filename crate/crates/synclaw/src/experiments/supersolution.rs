//! Explicit envelope check on random data and the amplitude-independence of
//! `sup_{s∈[1,2]} ‖u_s‖∞`.

use rand::Rng;
use serde::Serialize;
use synclaw_core::noise::{evolve_z, NoisePath};
use synclaw_core::solver::{evolve, supersolution_params, verify_comparison, Envelope, Trajectory};
use synclaw_core::synchro::pathwise_bound_stats;
use synclaw_core::{Field, Grid};

use super::{fan_out, partition, Context, ExperimentOutput};
use crate::config::{profile_rng, random_series};
use crate::error::Result;
use crate::output::{line_plot, summary_json, Artifact, Csv, Series};

/// Largest relative spread of `𝔠̂` across amplitudes that still counts as
/// amplitude independent.
pub const COMING_DOWN_TOLERANCE: f64 = 0.02;

const RANDOM_MODES: usize = 8;

/// Random datum number `i` of a seed: eight sine modes plus a constant
/// offset, rescaled to a sup norm drawn uniformly from `(0, max_amplitude]`.
pub(crate) fn random_initial(grid: Grid, seed: u64, i: usize, max_amplitude: f64) -> Field {
    let mut rng = profile_rng(seed, 100 + i as u64);
    let coeffs: Vec<f64> = (0..RANDOM_MODES).map(|_| rng.random_range(-1.0..1.0)).collect();
    let offset: f64 = rng.random_range(-1.0..1.0);
    let amp = max_amplitude * (1.0 - rng.random::<f64>());
    let shape = random_series(grid, &coeffs, 1.0);
    let f = Field::from_fn(grid, |_| offset);
    let mut sum = f;
    for (s, v) in sum.values_mut().iter_mut().zip(shape.values()) {
        *s += v;
    }
    let m = sum.max_abs();
    if m > 0.0 {
        sum.scaled(amp / m)
    } else {
        sum
    }
}

/// Data of sup norm `a`: `±a`, `±a sin(πx/L)` and two fixed random shapes.
pub(crate) fn amplitude_set(grid: Grid, a: f64) -> Vec<Field> {
    let l = grid.length();
    let mut set = vec![
        Field::from_fn(grid, |_| a),
        Field::from_fn(grid, |_| -a),
        Field::from_fn(grid, |x| a * (std::f64::consts::PI * x / l).sin()),
        Field::from_fn(grid, |x| -a * (std::f64::consts::PI * x / l).sin()),
    ];
    for k in 0..2 {
        let mut rng = profile_rng(0, 200 + k);
        let c: Vec<f64> = (0..RANDOM_MODES).map(|_| rng.random_range(-1.0..1.0)).collect();
        set.push(random_series(grid, &c, a));
    }
    set
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonRow {
    seed: u64,
    a: f64,
    b: f64,
    z_sup: f64,
    z_grad_sup: f64,
    n_initial: usize,
    pass: bool,
    failing_initial: usize,
    worst_excess: f64,
    worst_time: f64,
    worst_cell: usize,
    worst_side: &'static str,
    tol: f64,
    checked_states: usize,
}

#[derive(Debug, Clone, Serialize)]
struct ComingDownRow {
    seed: u64,
    /// `𝔠̂` per amplitude, in the order of `amplitudes`.
    sup_norm: Vec<f64>,
    spread: f64,
    pass: bool,
}

#[derive(Debug, Clone, Serialize)]
struct Body {
    t_final: f64,
    t_min: f64,
    max_amplitude: f64,
    comparison: Vec<ComparisonRow>,
    comparison_all_pass: bool,
    amplitudes: Vec<f64>,
    coming_down: Vec<ComingDownRow>,
    coming_down_tolerance: f64,
    coming_down_all_pass: bool,
    coming_down_worst_spread: Option<f64>,
}

/// `(max − min)/max` (0 for an empty or all-zero list).
pub(crate) fn relative_spread(v: &[f64]) -> f64 {
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    if v.is_empty() || hi <= 0.0 {
        0.0
    } else {
        (hi - lo) / hi
    }
}

fn trajectory_csv(traj: &Trajectory) -> Vec<u8> {
    let mut csv = Csv::new(&["t", "l1", "l2", "lp", "linf", "boundary_flux"]);
    for j in 0..=traj.n_steps() {
        csv.row(&[
            traj.time(j),
            traj.l1[j],
            traj.l2[j],
            traj.lp[j],
            traj.linf[j],
            traj.boundary_flux[j],
        ]);
    }
    csv.into_bytes()
}

struct SeedRun {
    row: ComparisonRow,
    csv: Vec<u8>,
    linf: Vec<(f64, f64)>,
}

fn compare_seed(ctx: &Context, seed: u64) -> synclaw_core::Result<SeedRun> {
    let cfg = ctx.cfg;
    let knobs = &cfg.supersolution;
    let sc = cfg.solver_config();
    let horizon = sc.n_steps() as f64 * sc.dt;
    let path = NoisePath::sample(&ctx.spec, seed, sc.dt, sc.n_steps())?;
    let quiet = ctx.spec.n_modes() == 0 && ctx.spec.forcing.is_zero();
    let z = if quiet {
        None
    } else {
        Some(evolve_z(&ctx.spec, &path, &ctx.grid, 1.0, sc.stride)?)
    };
    let (z_sup, z_grad) = z
        .as_ref()
        .map_or((0.0, 0.0), |z| (z.sup_up_to(horizon), z.grad_sup_up_to(horizon)));
    let params = supersolution_params(&ctx.model, horizon, z_sup, z_grad, &ctx.grid)?;
    let mut row = ComparisonRow {
        seed,
        a: params.a,
        b: params.b,
        z_sup,
        z_grad_sup: z_grad,
        n_initial: knobs.n_random,
        pass: true,
        failing_initial: 0,
        worst_excess: f64::NEG_INFINITY,
        worst_time: 0.0,
        worst_cell: 0,
        worst_side: "upper",
        tol: 0.0,
        checked_states: 0,
    };
    let mut first = None;
    for i in 0..knobs.n_random {
        let u0 = random_initial(ctx.grid, seed, i, knobs.max_amplitude);
        let traj = evolve(&u0, &ctx.model, &ctx.spec, &path, &sc)?;
        let rep = verify_comparison(&traj, &params, knobs.t_min, z.as_ref())?;
        if !rep.pass {
            row.failing_initial += 1;
        }
        row.pass &= rep.pass;
        row.checked_states += rep.checked_states;
        if rep.worst_excess > row.worst_excess {
            row.worst_excess = rep.worst_excess;
            row.worst_time = rep.worst_time;
            row.worst_cell = rep.worst_cell;
            row.worst_side = match rep.worst_side {
                Envelope::Upper => "upper",
                Envelope::Lower => "lower",
            };
            row.tol = rep.tol;
        }
        if first.is_none() {
            first = Some(traj);
        }
    }
    let (csv, linf) = match &first {
        Some(t) => (
            trajectory_csv(t),
            (0..=t.n_steps())
                .filter(|&j| t.time(j) >= knobs.t_min)
                .map(|j| (t.time(j), t.linf[j]))
                .collect(),
        ),
        None => (
            Csv::new(&["t", "l1", "l2", "lp", "linf", "boundary_flux"]).into_bytes(),
            Vec::new(),
        ),
    };
    Ok(SeedRun { row, csv, linf })
}

pub(super) fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let cfg = ctx.cfg;
    let knobs = &cfg.supersolution;
    let (runs, mut failures) = partition(fan_out(&cfg.seeds, |seed| compare_seed(ctx, seed)), "comparison");

    let mut out = ExperimentOutput::default();
    let mut series = Vec::new();
    let mut comparison = Vec::new();
    for (seed, run) in runs {
        out.artifacts
            .push(Artifact::new(format!("trajectory_seed{seed}.csv"), run.csv));
        series.push(Series::new(format!("seed {seed}"), run.linf));
        comparison.push(run.row);
    }

    let mut per_amp = Vec::new();
    for &a in &knobs.amplitudes {
        match pathwise_bound_stats(
            &ctx.model,
            &ctx.spec,
            &cfg.seeds,
            &amplitude_set(ctx.grid, a),
            &cfg.solver_config(),
        ) {
            Ok(b) => per_amp.push(b.per_seed),
            Err(e) => failures.push(crate::manifest::Failure {
                seed: None,
                task: format!("coming_down amplitude {}", crate::config::num(a)),
                error: e.to_string(),
            }),
        }
    }
    let coming_down: Vec<ComingDownRow> = if per_amp.len() == knobs.amplitudes.len() {
        cfg.seeds
            .iter()
            .enumerate()
            .map(|(k, &seed)| {
                let sup_norm: Vec<f64> = per_amp.iter().map(|v| v[k]).collect();
                let spread = relative_spread(&sup_norm);
                ComingDownRow {
                    seed,
                    sup_norm,
                    spread,
                    pass: spread <= COMING_DOWN_TOLERANCE,
                }
            })
            .collect()
    } else {
        Vec::new()
    };

    let body = Body {
        t_final: cfg.solver.t_final,
        t_min: knobs.t_min,
        max_amplitude: knobs.max_amplitude,
        comparison_all_pass: !comparison.is_empty() && comparison.iter().all(|r| r.pass),
        comparison,
        amplitudes: knobs.amplitudes.clone(),
        coming_down_tolerance: COMING_DOWN_TOLERANCE,
        coming_down_all_pass: !coming_down.is_empty() && coming_down.iter().all(|r| r.pass),
        coming_down_worst_spread: coming_down.iter().map(|r| r.spread).reduce(f64::max),
        coming_down,
    };
    out.failures = failures;
    out.artifacts.push(Artifact::new(
        "summary.json",
        summary_json("supersolution", &ctx.hash, &body)?,
    ));
    out.artifacts.push(Artifact::new(
        "envelope.svg",
        line_plot("sup norm after t_min", "t", "||u||_inf", &series, true),
    ));
    Ok(out)
}
