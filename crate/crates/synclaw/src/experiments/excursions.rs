//! Center sets calibrated on pilot runs, excursion decomposition of the
//! production runs, center-time rate `η̂` and the moment audit.

use serde::Serialize;
use synclaw_core::excursions::{
    c_of, calibrate_centers, center_time_rate, check_partition, classify_excursions, excursion_b_sup, moment_audit,
    Calibration, CalibrationOptions, CenterSets, ExcursionRecord,
};
use synclaw_core::exit::GirsanovBound;

use super::{fan_out, partition, Context, ExperimentOutput};
use crate::error::Result;
use crate::manifest::Failure;
use crate::output::{line_plot, summary_json, Artifact, Csv, Series};

#[derive(Debug, Clone, Serialize)]
struct CentersOut {
    p: f64,
    r1: f64,
    r2: f64,
    r3: f64,
    rbar1: f64,
    rbar2: f64,
}

impl From<CenterSets> for CentersOut {
    fn from(c: CenterSets) -> Self {
        Self {
            p: c.p,
            r1: c.r1,
            r2: c.r2,
            r3: c.r3,
            rbar1: c.rbar1,
            rbar2: c.rbar2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct CalibrationOut {
    pilot_seeds: Vec<u64>,
    pilot_t_final: f64,
    c1: f64,
    c2: f64,
    pilot_excursions: usize,
    escape_fraction: f64,
    fitted: CentersOut,
    used: CentersOut,
}

#[derive(Debug, Clone, Serialize)]
struct SeedSummary {
    seed: u64,
    n_excursions: usize,
    truncated_from: Option<f64>,
    x_t: usize,
    l_t: f64,
    eta_hat: f64,
    trend_variation: f64,
    max_inner_length: f64,
    inner_lengths_ok: bool,
    partition_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
struct BinOut {
    lo: f64,
    hi: f64,
    n: usize,
    mean_start_norm_p: f64,
    mean_exp_kappa_s: f64,
    ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
struct MomentOut {
    status: &'static str,
    kappa: f64,
    spread: Option<f64>,
    bins: Vec<BinOut>,
}

#[derive(Debug, Clone, Serialize)]
struct Body {
    t_final: f64,
    dt: f64,
    calibration: Option<CalibrationOut>,
    kappa: Option<f64>,
    seeds: Vec<SeedSummary>,
    moment_audit: Option<MomentOut>,
    all_eta_positive: bool,
    all_partitions_ok: bool,
    all_inner_lengths_ok: bool,
}

fn apply_overrides(ctx: &Context, fitted: CenterSets) -> synclaw_core::Result<CenterSets> {
    let k = &ctx.cfg.excursions;
    let c = CenterSets {
        r1: k.r1.unwrap_or(fitted.r1),
        r2: k.r2.unwrap_or(fitted.r2),
        r3: k.r3.unwrap_or(fitted.r3),
        rbar1: k.rbar1.unwrap_or(fitted.rbar1),
        rbar2: k.rbar2.unwrap_or(fitted.rbar2),
        ..fitted
    };
    c.validate()?;
    Ok(c)
}

fn calibrate(ctx: &Context) -> synclaw_core::Result<(Calibration, CenterSets)> {
    let k = &ctx.cfg.excursions;
    let pilots = fan_out(&k.pilot_seeds, |seed| ctx.pair_run(seed, k.pilot_t_final, usize::MAX))
        .into_iter()
        .map(|(_, r)| r)
        .collect::<synclaw_core::Result<Vec<_>>>()?;
    let opts = CalibrationOptions {
        delta: k.delta,
        epsilon: k.epsilon,
        min_excursions: k.min_excursions,
        ..CalibrationOptions::default()
    };
    let cal = calibrate_centers(&pilots, ctx.cfg.solver.norm_p, &opts)?;
    let used = apply_overrides(ctx, cal.centers)?;
    Ok((cal, used))
}

struct SeedRun {
    summary: SeedSummary,
    record: ExcursionRecord,
    csv: Vec<u8>,
    running: Vec<(f64, f64)>,
}

fn seed_run(ctx: &Context, seed: u64, centers: &CenterSets) -> synclaw_core::Result<SeedRun> {
    let cfg = ctx.cfg;
    let pair = ctx.pair_run(seed, cfg.solver.t_final, usize::MAX)?;
    let record = classify_excursions(&pair, centers)?;
    let bound = GirsanovBound::for_interval(ctx.grid.length());
    let b_override = cfg.excursions.b_sup;
    let rate = center_time_rate(
        &record,
        &ctx.model,
        b_override,
        pair.horizon(),
        &bound,
        cfg.excursions.n_running,
    )?;
    let mut csv = Csv::new(&[
        "tau",
        "sigma",
        "next_tau",
        "tau_in",
        "tau_out",
        "s",
        "t",
        "t_inf",
        "start_norm_p",
        "inner_sup",
        "credit",
    ]);
    let mut max_inner = 0.0_f64;
    for e in &record.excursions {
        let credit = if e.t_inf() > 0.0 {
            c_of(e.t_inf(), excursion_b_sup(e, &ctx.model, b_override), &bound)?
        } else {
            0.0
        };
        max_inner = max_inner.max(e.t());
        csv.row(&[
            e.tau,
            e.sigma,
            e.next_tau,
            e.tau_in,
            e.tau_out,
            e.s(),
            e.t(),
            e.t_inf(),
            e.start_norm_p,
            e.inner_sup,
            credit,
        ]);
    }
    let summary = SeedSummary {
        seed,
        n_excursions: record.excursions.len(),
        truncated_from: record.truncated_from,
        x_t: rate.x_t,
        l_t: rate.l_t,
        eta_hat: rate.eta_hat,
        trend_variation: rate.trend_variation,
        max_inner_length: max_inner,
        inner_lengths_ok: max_inner <= 1.0 + pair.dt + 1e-9,
        partition_ok: check_partition(&record),
    };
    Ok(SeedRun {
        summary,
        record,
        csv: csv.into_bytes(),
        running: rate.running,
    })
}

pub(super) fn run(ctx: &Context) -> Result<ExperimentOutput> {
    let cfg = ctx.cfg;
    let k = &cfg.excursions;
    let mut out = ExperimentOutput::default();
    let mut body = Body {
        t_final: cfg.solver.t_final,
        dt: cfg.solver.dt,
        calibration: None,
        kappa: None,
        seeds: Vec::new(),
        moment_audit: None,
        all_eta_positive: false,
        all_partitions_ok: false,
        all_inner_lengths_ok: false,
    };
    let mut series = Vec::new();
    match calibrate(ctx) {
        Err(e) => out.failures.push(Failure {
            seed: None,
            task: "calibration".into(),
            error: e.to_string(),
        }),
        Ok((cal, centers)) => {
            let kappa = k.kappa_fraction * 0.5 * cal.c1;
            body.calibration = Some(CalibrationOut {
                pilot_seeds: k.pilot_seeds.clone(),
                pilot_t_final: k.pilot_t_final,
                c1: cal.c1,
                c2: cal.c2,
                pilot_excursions: cal.n_excursions,
                escape_fraction: cal.escape_fraction,
                fitted: cal.centers.into(),
                used: centers.into(),
            });
            body.kappa = Some(kappa);
            let (runs, failures) = partition(fan_out(&cfg.seeds, |seed| seed_run(ctx, seed, &centers)), "excursions");
            out.failures = failures;
            let mut records = Vec::new();
            for (seed, run) in runs {
                out.artifacts
                    .push(Artifact::new(format!("excursions_seed{seed}.csv"), run.csv));
                series.push(Series::new(format!("seed {seed}"), run.running));
                records.push(run.record);
                body.seeds.push(run.summary);
            }
            match moment_audit(&records, kappa, cal.c1) {
                Ok(a) => {
                    body.moment_audit = Some(MomentOut {
                        status: a.status.as_str(),
                        kappa: a.kappa,
                        spread: a.spread.is_finite().then_some(a.spread),
                        bins: a
                            .bins
                            .iter()
                            .map(|b| BinOut {
                                lo: b.lo,
                                hi: b.hi,
                                n: b.n,
                                mean_start_norm_p: b.mean_start_norm_p,
                                mean_exp_kappa_s: b.mean_exp_kappa_s,
                                ratio: b.ratio,
                            })
                            .collect(),
                    })
                }
                Err(e) => out.failures.push(Failure {
                    seed: None,
                    task: "moment_audit".into(),
                    error: e.to_string(),
                }),
            }
            let any = !body.seeds.is_empty();
            body.all_eta_positive = any && body.seeds.iter().all(|s| s.eta_hat > 0.0);
            body.all_partitions_ok = any && body.seeds.iter().all(|s| s.partition_ok);
            body.all_inner_lengths_ok = any && body.seeds.iter().all(|s| s.inner_lengths_ok);
        }
    }
    out.artifacts.push(Artifact::new(
        "summary.json",
        summary_json("excursions", &ctx.hash, &body)?,
    ));
    out.artifacts.push(Artifact::new(
        "eta_trace.svg",
        line_plot("center-time rate", "t", "eta", &series, false),
    ));
    Ok(out)
}
