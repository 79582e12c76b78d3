//! Stopping-time decomposition of a pair run relative to nested center
//! sets, the excursion counters `X_t`, `L_t(B)` and their moment audit.
//!
//! All stopping times are resolved on the solver's time grid: each is the
//! first grid time at which its condition holds.

use crate::error::{Error, Result};
use crate::exit::GirsanovBound;
use crate::flux::FluxModel;
use crate::stats::{linear_fit, mean, quantile};
use crate::synchro::PairTrajectory;

/// Radii of `𝒞⁻ ⊂ 𝒞ᵐ ⊂ 𝒞⁺` in the pair Lᵖ norm and of `𝒞⁻∞ ⊂ 𝒞⁺∞` in L∞.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterSets {
    pub p: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub rbar1: f64,
    pub rbar2: f64,
}

impl CenterSets {
    pub fn new(p: f64, r1: f64, r2: f64, r3: f64, rbar1: f64, rbar2: f64) -> Result<Self> {
        let c = Self {
            p,
            r1,
            r2,
            r3,
            rbar1,
            rbar2,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p >= 2.0 && self.p.fract() == 0.0 && (self.p as u64).is_multiple_of(2)) {
            return Err(Error::InvalidCenters(format!(
                "p must be an even integer ≥ 2, got {}",
                self.p
            )));
        }
        if !(0.0 < self.r1 && self.r1 < self.r2 && self.r2 < self.r3 && self.r3.is_finite()) {
            return Err(Error::InvalidCenters(format!(
                "need 0 < R1 < R2 < R3, got R1 = {}, R2 = {}, R3 = {}",
                self.r1, self.r2, self.r3
            )));
        }
        if !(0.0 < self.rbar1 && self.rbar1 < self.rbar2 && self.rbar2.is_finite()) {
            return Err(Error::InvalidCenters(format!(
                "need 0 < R̄1 < R̄2, got R̄1 = {}, R̄2 = {}",
                self.rbar1, self.rbar2
            )));
        }
        Ok(())
    }
}

/// One complete excursion: outer part `[τ, σ]`, inner part `[σ, τ_next]`,
/// and the L∞-center window `[τ_in, τ_out] ⊂ [σ, τ_next]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Excursion {
    pub tau: f64,
    pub sigma: f64,
    pub next_tau: f64,
    pub tau_in: f64,
    pub tau_out: f64,
    /// `‖𝐮_τ‖ᵖ_{Lᵖ}` of the pair at the start.
    pub start_norm_p: f64,
    /// `max(‖u‖∞, ‖v‖∞)` over `[τ_in, τ_out]`.
    pub inner_sup: f64,
}

impl Excursion {
    /// `S = σ − τ`.
    pub fn s(&self) -> f64 {
        self.sigma - self.tau
    }

    /// `T = τ_next − σ`.
    pub fn t(&self) -> f64 {
        self.next_tau - self.sigma
    }

    /// `T^∞ = τ_out − τ_in`.
    pub fn t_inf(&self) -> f64 {
        self.tau_out - self.tau_in
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionRecord {
    pub dt: f64,
    pub horizon: f64,
    pub excursions: Vec<Excursion>,
    /// Start of the incomplete final excursion, never counted.
    pub truncated_from: Option<f64>,
}

impl ExcursionRecord {
    pub fn empty() -> Self {
        Self {
            dt: 0.0,
            horizon: 0.0,
            excursions: Vec::new(),
            truncated_from: None,
        }
    }
}

fn first_from(v: &[f64], start: usize, pred: impl Fn(f64) -> bool) -> Option<usize> {
    v[start..].iter().position(|&x| pred(x)).map(|k| k + start)
}

/// Decomposes a pair run; `τ₀ = 0`.
pub fn classify_excursions(pair: &PairTrajectory, centers: &CenterSets) -> Result<ExcursionRecord> {
    centers.validate()?;
    let norms = pair.pair_lp();
    classify_series(&norms, &pair.sup_norms, pair.dt, centers)
}

/// Decomposition from raw series: pair Lᵖ norm and pair sup norm at every
/// grid time `j·dt`.
pub fn classify_series(norm: &[f64], sup: &[f64], dt: f64, centers: &CenterSets) -> Result<ExcursionRecord> {
    if norm.len() != sup.len() {
        return Err(Error::LengthMismatch {
            expected: norm.len(),
            got: sup.len(),
        });
    }
    if norm.is_empty() || !(dt > 0.0) {
        return Err(Error::InvalidArgument("empty series or nonpositive dt".into()));
    }
    let last = norm.len() - 1;
    let cap = (1.0 / dt - 1e-9).ceil() as usize;
    let p = centers.p;
    let mut rec = ExcursionRecord {
        dt,
        horizon: last as f64 * dt,
        excursions: Vec::new(),
        truncated_from: None,
    };
    let mut tau = 0usize;
    loop {
        let sigma = if norm[tau] <= centers.r2 {
            Some(tau)
        } else {
            first_from(norm, tau, |x| x <= centers.r1)
        };
        let Some(sigma) = sigma else {
            rec.truncated_from = Some(tau as f64 * dt);
            break;
        };
        let limit = sigma + cap;
        let escape = if sigma < last {
            first_from(norm, sigma + 1, |x| x > centers.r3).filter(|&j| j <= limit)
        } else {
            None
        };
        let next = match escape {
            Some(j) => j,
            None if limit <= last => limit,
            None => {
                rec.truncated_from = Some(tau as f64 * dt);
                break;
            }
        };
        let tau_in = first_from(&sup[..=next], sigma, |x| x <= centers.rbar1).unwrap_or(next);
        let tau_out = if tau_in < next {
            first_from(&sup[..=next], tau_in + 1, |x| x > centers.rbar2).unwrap_or(next)
        } else {
            next
        };
        let inner_sup = sup[tau_in..=tau_out].iter().copied().fold(0.0, f64::max);
        rec.excursions.push(Excursion {
            tau: tau as f64 * dt,
            sigma: sigma as f64 * dt,
            next_tau: next as f64 * dt,
            tau_in: tau_in as f64 * dt,
            tau_out: tau_out as f64 * dt,
            start_norm_p: norm[tau].powf(p),
            inner_sup,
        });
        tau = next;
        if tau == last {
            // the next excursion would start at the horizon with no room
            rec.truncated_from = Some(tau as f64 * dt);
            break;
        }
    }
    Ok(rec)
}

/// `−log(1 − c·exp(−(C + B_sup²)/T_inf))`.
pub fn c_of(t_inf: f64, b_sup: f64, bound: &GirsanovBound) -> Result<f64> {
    if !(t_inf > 0.0) {
        return Err(Error::InvalidArgument(format!("T_inf must be positive, got {t_inf}")));
    }
    Ok(-(-bound.c * bound.exponent(t_inf, b_sup).exp()).ln_1p())
}

/// Per-excursion `B_sup`: the override if given, otherwise `sup|A′|` on
/// `[−R, R]` with `R` the excursion's inner sup norm.
pub fn excursion_b_sup(exc: &Excursion, model: &FluxModel, b_override: Option<f64>) -> f64 {
    b_override.unwrap_or_else(|| model.lipschitz_bound_on(-exc.inner_sup, exc.inner_sup))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CenterTimeRate {
    pub x_t: usize,
    pub l_t: f64,
    pub eta_hat: f64,
    /// `(s, η̂(s))` from records cut at each `s`.
    pub running: Vec<(f64, f64)>,
    /// `(max − min)/mean` of the running η̂ over `[t/2, t]`.
    pub trend_variation: f64,
}

fn counters(excs: &[Excursion], credit: &[f64], t: f64) -> (usize, f64) {
    let mut x = 0;
    let mut acc = 0.0;
    for e in excs.iter().skip(1) {
        acc += e.s();
        if acc > t {
            break;
        }
        x += 1;
    }
    (x, credit[..x].iter().sum())
}

/// `X_t = max{n : Σ_{i=1}^n Sᵢ ≤ t}` and `L_t = Σ_{i=1}^{X_t} c(Tᵢ^∞, B)`,
/// where `Tᵢ^∞` is the center time of the inner part ending at `τᵢ`.
pub fn center_time_rate(
    record: &ExcursionRecord,
    model: &FluxModel,
    b_override: Option<f64>,
    t: f64,
    bound: &GirsanovBound,
    n_running: usize,
) -> Result<CenterTimeRate> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t}")));
    }
    let excs = &record.excursions;
    let credit: Vec<f64> = excs
        .iter()
        .map(|e| {
            if e.t_inf() > 0.0 {
                c_of(e.t_inf(), excursion_b_sup(e, model, b_override), bound)
            } else {
                Ok(0.0)
            }
        })
        .collect::<Result<_>>()?;
    let (x_t, l_t) = counters(excs, &credit, t);
    let mut running = Vec::with_capacity(n_running);
    for k in 1..=n_running {
        let s = t * k as f64 / n_running as f64;
        let complete = excs.iter().take_while(|e| e.next_tau <= s + 1e-9).count();
        let (_, l) = counters(&excs[..complete], &credit[..complete], s);
        running.push((s, l / s));
    }
    let late: Vec<f64> = running
        .iter()
        .filter(|(s, _)| *s >= 0.5 * t - 1e-9)
        .map(|&(_, e)| e)
        .collect();
    let trend_variation = if late.is_empty() {
        0.0
    } else {
        let m = mean(&late);
        let spread =
            late.iter().copied().fold(f64::NEG_INFINITY, f64::max) - late.iter().copied().fold(f64::INFINITY, f64::min);
        if m > 0.0 {
            spread / m
        } else if spread == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    };
    Ok(CenterTimeRate {
        x_t,
        l_t,
        eta_hat: l_t / t,
        running,
        trend_variation,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditStatus {
    Pass,
    Fail,
    InsufficientData,
}

impl AuditStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Fail => "fail",
            Self::InsufficientData => "insufficient data",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBin {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub mean_start_norm_p: f64,
    pub mean_exp_kappa_s: f64,
    /// `mean(e^{κS})/(1 + mean ‖𝐮_τ‖ᵖ)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentAudit {
    pub status: AuditStatus,
    pub kappa: f64,
    pub bins: Vec<MomentBin>,
    /// `max ratio / min ratio` over the bins.
    pub spread: f64,
}

pub const MIN_PER_BIN: usize = 30;
pub const MAX_BINS: usize = 4;

/// Groups `(‖𝐮_τ‖ᵖ, S)` over all complete excursions into equal-count bins
/// ordered by the starting norm and compares `E[e^{κS}]/(1 + ‖𝐮_τ‖ᵖ)` across bins.
pub fn moment_audit(records: &[ExcursionRecord], kappa: f64, c1_hat: f64) -> Result<MomentAudit> {
    if !(kappa >= 0.0 && kappa <= 0.5 * c1_hat) {
        return Err(Error::Precondition(format!(
            "κ = {kappa} must lie in [0, ĉ₁/2] with ĉ₁ = {c1_hat}"
        )));
    }
    let mut samples: Vec<(f64, f64)> = records
        .iter()
        .flat_map(|r| r.excursions.iter().map(|e| (e.start_norm_p, e.s())))
        .collect();
    let n_bins = (samples.len() / MIN_PER_BIN).min(MAX_BINS);
    if n_bins == 0 {
        return Ok(MomentAudit {
            status: AuditStatus::InsufficientData,
            kappa,
            bins: Vec::new(),
            spread: f64::NAN,
        });
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    // rank-based quantile bins: ties in the starting norm never empty a bin
    let base = samples.len() / n_bins;
    let extra = samples.len() % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut at = 0;
    for b in 0..n_bins {
        let size = base + usize::from(b < extra);
        let members = &samples[at..at + size];
        at += size;
        let m_start = mean(&members.iter().map(|m| m.0).collect::<Vec<_>>());
        let m_exp = mean(&members.iter().map(|m| (kappa * m.1).exp()).collect::<Vec<_>>());
        bins.push(MomentBin {
            lo: members[0].0,
            hi: members[size - 1].0,
            n: size,
            mean_start_norm_p: m_start,
            mean_exp_kappa_s: m_exp,
            ratio: m_exp / (1.0 + m_start),
        });
    }
    let max = bins.iter().map(|b| b.ratio).fold(f64::NEG_INFINITY, f64::max);
    let min = bins.iter().map(|b| b.ratio).fold(f64::INFINITY, f64::min);
    let spread = max / min;
    Ok(MomentAudit {
        status: if spread <= 10.0 {
            AuditStatus::Pass
        } else {
            AuditStatus::Fail
        },
        kappa,
        bins,
        spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub delta: f64,
    pub epsilon: f64,
    pub min_excursions: usize,
    pub linf_quantiles: (f64, f64),
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            delta: 0.1,
            epsilon: 0.1,
            min_excursions: 100,
            linf_quantiles: (0.75, 0.99),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub centers: CenterSets,
    pub c1: f64,
    pub c2: f64,
    pub n_excursions: usize,
    /// Fraction of `2δ` windows started in `𝒞ᵐ` that leave `𝒞⁺`.
    pub escape_fraction: f64,
}

/// Pooled fit of `d‖𝐮‖ᵖ/dt ≈ −c₁‖𝐮‖ᵖ + c₂` over the pilots.
pub fn pooled_drift(pilots: &[PairTrajectory], p: f64) -> Result<(f64, f64)> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for pair in pilots {
        let n: Vec<f64> = pair.pair_lp().iter().map(|v| v.powf(p)).collect();
        for w in n.windows(2) {
            xs.push(w[0]);
            ys.push((w[1] - w[0]) / pair.dt);
        }
    }
    let fit = linear_fit(&xs, &ys)?;
    Ok((-fit.slope, fit.intercept))
}

/// `R1 = (2c₂/c₁ + 1)^{1/p}` (with `c₂` floored at 0), `R2 = 2R1`.
pub fn inner_radii(c1: f64, c2: f64, p: f64) -> Result<(f64, f64)> {
    if !(c1 > 0.0) {
        return Err(Error::InvalidCenters(format!("fitted c₁ = {c1} is not positive")));
    }
    let r1 = (2.0 * c2.max(0.0) / c1 + 1.0).powf(1.0 / p);
    Ok((r1, 2.0 * r1))
}

fn escape_maxima(norm: &[f64], dt: f64, r2: f64, window: f64) -> Vec<f64> {
    let w = ((window / dt).round() as usize).max(1);
    (0..norm.len().saturating_sub(w))
        .filter(|&j| norm[j] <= r2)
        .map(|j| norm[j..=j + w].iter().copied().fold(0.0, f64::max))
        .collect()
}

pub fn calibrate_centers(pilots: &[PairTrajectory], p: f64, opts: &CalibrationOptions) -> Result<Calibration> {
    if pilots.is_empty() {
        return Err(Error::PilotTooShort {
            found: 0,
            needed: opts.min_excursions,
        });
    }
    if pilots.iter().any(|q| q.norm_p != p) {
        return Err(Error::InvalidArgument(format!("pilots must record the p = {p} norm")));
    }
    let (c1, c2) = pooled_drift(pilots, p)?;
    let (r1, r2) = inner_radii(c1, c2, p)?;
    let mut maxima = Vec::new();
    for pair in pilots {
        maxima.extend(escape_maxima(&pair.pair_lp(), pair.dt, r2, 2.0 * opts.delta));
    }
    let r3 = if maxima.is_empty() {
        r2 * 1.01
    } else {
        quantile(&maxima, 1.0 - opts.epsilon).max(r2 * 1.01)
    };
    let sups: Vec<f64> = pilots.iter().flat_map(|q| q.sup_norms.iter().copied()).collect();
    let rbar1 = quantile(&sups, opts.linf_quantiles.0);
    let rbar2 = quantile(&sups, opts.linf_quantiles.1);
    let centers = CenterSets::new(p, r1, r2, r3, rbar1, rbar2)?;
    let escape_fraction = if maxima.is_empty() {
        0.0
    } else {
        maxima.iter().filter(|&&m| m > r3).count() as f64 / maxima.len() as f64
    };
    let mut n_excursions = 0;
    for pair in pilots {
        n_excursions += classify_excursions(pair, &centers)?.excursions.len();
    }
    if n_excursions < opts.min_excursions {
        return Err(Error::PilotTooShort {
            found: n_excursions,
            needed: opts.min_excursions,
        });
    }
    Ok(Calibration {
        centers,
        c1,
        c2,
        n_excursions,
        escape_fraction,
    })
}

/// Checks that the excursions tile `[0, truncated_from]` without gaps or
/// overlaps and that every inner length is at most `1 + dt`.
pub fn check_partition(record: &ExcursionRecord) -> bool {
    let tol = 1e-9;
    let mut at = 0.0;
    for e in &record.excursions {
        let ordered = (e.tau - at).abs() <= tol
            && e.tau <= e.sigma + tol
            && e.sigma <= e.tau_in + tol
            && e.tau_in <= e.tau_out + tol
            && e.tau_out <= e.next_tau + tol
            && e.t() <= 1.0 + record.dt + tol
            && e.t_inf() <= e.t() + tol;
        if !ordered {
            return false;
        }
        at = e.next_tau;
    }
    match record.truncated_from {
        Some(t) => (t - at).abs() <= tol,
        None => (record.horizon - at).abs() <= tol,
    }
}
