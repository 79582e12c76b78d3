//! Monotone IMEX time stepping for `∂ₜu + ∂ₓA(u) − Δu = ξ`.
//!
//! One step applies the explicit conservative update with the local
//! Lax–Friedrichs flux, adds the forcing increment, then solves the implicit
//! heat step. Under the CFL bound the map `u ↦ u_next` is monotone and
//! L¹-contractive, so two solutions driven by the same increments stay
//! ordered and their distance never grows.

use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::grid::{boundary_normal_gradient, lp_norm, lp_norm_pow, Field, Grid, ImplicitDiffusion};
use crate::noise::{ForcingSampler, NoisePath, NoiseSpec, ZTrajectory};
use crate::stats::linear_fit;

const MAX_SUBSTEPS: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Fraction of the explicit stability limit `dx/(2 sup|A′|)` a step may use.
    pub cfl_safety: f64,
    /// When set, the Lipschitz bound is evaluated on at least `[−c, c]`.
    pub clip_range: Option<f64>,
    /// Index of the extra Lᵖ norm recorded alongside L¹, L², L∞.
    pub norm_p: f64,
    /// Full states are kept every `stride` steps.
    pub stride: usize,
}

impl SolverConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        Self {
            dt,
            t_final,
            cfl_safety: 0.5,
            clip_range: None,
            norm_p: 2.0,
            stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_norm(mut self, p: f64) -> Self {
        self.norm_p = p;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "T_final must be nonnegative, got {}",
                self.t_final
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "cfl_safety must lie in (0, 1], got {}",
                self.cfl_safety
            )));
        }
        if let Some(c) = self.clip_range {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidArgument(format!("clip_range must be positive, got {c}")));
            }
        }
        if self.norm_p.is_nan() || self.norm_p < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "norm index must be ≥ 1, got {}",
                self.norm_p
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidArgument("stride must be positive".into()));
        }
        Ok(())
    }
}

/// Boundary flux rates of one step, both signed as outward mass flow
/// into the domain (nonpositive for nonnegative states).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepReport {
    /// `∫_{∂𝒟} 𝐧·∇u` at the post-diffusion state.
    pub diffusive: f64,
    /// `F̂₀ − F̂ₙ`, the numerical flux through the two outer faces.
    pub advective: f64,
}

impl StepReport {
    pub fn total(&self) -> f64 {
        self.diffusive + self.advective
    }
}

#[inline]
pub fn llf_flux(model: &FluxModel, ul: f64, ur: f64) -> f64 {
    let lam = model.lipschitz_bound_on(ul, ur);
    0.5 * (model.flux(ul) + model.flux(ur)) - 0.5 * lam * (ur - ul)
}

/// Local Lax–Friedrichs fluxes on all `n + 1` faces, with ghost value 0 on
/// the two outer faces.
pub fn llf_face_fluxes(u: &[f64], model: &FluxModel, out: &mut [f64]) {
    let n = u.len();
    debug_assert_eq!(out.len(), n + 1);
    if model.is_zero() {
        out.fill(0.0);
        return;
    }
    out[0] = llf_flux(model, 0.0, u[0]);
    for i in 1..n {
        out[i] = llf_flux(model, u[i - 1], u[i]);
    }
    out[n] = llf_flux(model, u[n - 1], 0.0);
}

fn state_range(u: &[f64], clip: Option<f64>) -> (f64, f64) {
    let c = clip.unwrap_or(0.0);
    u.iter().fold((-c, c), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn stable_dt_raw(u: &[f64], model: &FluxModel, dx: f64, cfl: f64, clip: Option<f64>) -> f64 {
    let (lo, hi) = state_range(u, clip);
    let lip = model.lipschitz_bound_on(lo, hi);
    if lip > 0.0 {
        cfl * dx / (2.0 * lip)
    } else {
        f64::INFINITY
    }
}

/// Largest admissible explicit step for `u`.
pub fn max_stable_dt(u: &Field, model: &FluxModel, cfl_safety: f64) -> f64 {
    stable_dt_raw(u.values(), model, u.grid().dx(), cfl_safety, None)
}

/// Explicit flux update plus forcing into `out`; returns the advective
/// boundary rate `F̂₀ − F̂ₙ`.
#[allow(clippy::too_many_arguments)]
fn explicit_part(
    u: &[f64],
    model: &FluxModel,
    dt: f64,
    dx: f64,
    forcing: &[f64],
    forcing_scale: f64,
    flux: &mut [f64],
    out: &mut [f64],
) -> f64 {
    llf_face_fluxes(u, model, flux);
    let r = dt / dx;
    for i in 0..u.len() {
        out[i] = u[i] - r * (flux[i + 1] - flux[i]) + forcing_scale * forcing[i];
    }
    flux[0] - flux[u.len()]
}

/// One IMEX step with a prefactored diffusion solve. `cfl_safety` bounds the
/// admissible step; a violation is reported, not repaired.
pub fn step_with(
    u: &Field,
    model: &FluxModel,
    forcing_increment: &Field,
    heat: &ImplicitDiffusion,
    cfl_safety: f64,
) -> Result<(Field, StepReport)> {
    let grid = *u.grid();
    if forcing_increment.len() != u.len() {
        return Err(Error::LengthMismatch {
            expected: u.len(),
            got: forcing_increment.len(),
        });
    }
    let dt = heat.dt();
    let max_dt = max_stable_dt(u, model, cfl_safety);
    if dt > max_dt {
        return Err(Error::CflViolation { dt, max_dt });
    }
    let mut flux = vec![0.0; u.len() + 1];
    let mut out = vec![0.0; u.len()];
    let advective = explicit_part(
        u.values(),
        model,
        dt,
        grid.dx(),
        forcing_increment.values(),
        1.0,
        &mut flux,
        &mut out,
    );
    heat.solve_in_place(&mut out);
    let next = Field::new(grid, out).map_err(|_| Error::NonFinite { step: 1 })?;
    let diffusive = boundary_normal_gradient(&next);
    Ok((next, StepReport { diffusive, advective }))
}

/// One IMEX step, checked against the hard limit `dt ≤ dx/(2 sup|A′|)`.
pub fn step(u: &Field, model: &FluxModel, forcing_increment: &Field, dt: f64) -> Result<Field> {
    let heat = ImplicitDiffusion::new(*u.grid(), dt)?;
    step_with(u, model, forcing_increment, &heat, 1.0).map(|(f, _)| f)
}

/// Outcome of advancing a group of states over one outer step.
#[derive(Debug, Clone, PartialEq)]
pub struct Advance {
    pub substeps: usize,
    /// Per state, boundary rates averaged over the substeps.
    pub reports: Vec<StepReport>,
}

/// Advances one or more states over outer steps of fixed size with shared
/// forcing. If the CFL bound fails for any state, every state is redone with
/// twice as many substeps, so all states always see the same operator.
#[derive(Debug, Clone)]
pub struct Integrator {
    model: FluxModel,
    grid: Grid,
    dt: f64,
    cfl: f64,
    clip: Option<f64>,
    heat: ImplicitDiffusion,
    sub_heat: Option<ImplicitDiffusion>,
    sampler: ForcingSampler,
    incr: Vec<f64>,
    flux: Vec<f64>,
    scratch: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl Integrator {
    pub fn new(model: &FluxModel, spec: &NoiseSpec, grid: &Grid, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        spec.validate()?;
        Ok(Self {
            model: *model,
            grid: *grid,
            dt: cfg.dt,
            cfl: cfg.cfl_safety,
            clip: cfg.clip_range,
            heat: ImplicitDiffusion::new(*grid, cfg.dt)?,
            sub_heat: None,
            sampler: ForcingSampler::new(spec, grid),
            incr: vec![0.0; grid.n_cells()],
            flux: vec![0.0; grid.n_cells() + 1],
            scratch: Vec::new(),
            tmp: vec![0.0; grid.n_cells()],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &FluxModel {
        &self.model
    }

    /// Forcing increment of the most recent [`Integrator::advance`] call.
    pub fn last_increment(&self) -> &[f64] {
        &self.incr
    }

    fn substeps_needed(&self, states: &[Vec<f64>]) -> usize {
        let dx = self.grid.dx();
        let max_dt = states
            .iter()
            .map(|s| stable_dt_raw(s, &self.model, dx, self.cfl, self.clip))
            .fold(f64::INFINITY, f64::min);
        if self.dt <= max_dt {
            1
        } else {
            ((self.dt / max_dt).ceil() as usize).max(2)
        }
    }

    fn heat_for(&mut self, m: usize) -> Result<()> {
        let h = self.dt / m as f64;
        let stale = self.sub_heat.as_ref().is_none_or(|s| s.dt() != h);
        if m > 1 && stale {
            self.sub_heat = Some(ImplicitDiffusion::new(self.grid, h)?);
        }
        Ok(())
    }

    /// Advances every state in place over `[t, t + dt]` with Brownian
    /// increments `db`.
    #[allow(clippy::mut_range_bound)]
    pub fn advance(&mut self, states: &mut [Vec<f64>], t: f64, db: &[f64]) -> Result<Advance> {
        let n = self.grid.n_cells();
        for s in states.iter() {
            if s.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: s.len(),
                });
            }
        }
        self.sampler.increment_into(t, self.dt, db, &mut self.incr);
        let mut m = self.substeps_needed(states);
        let dx = self.grid.dx();
        'attempt: loop {
            if m > MAX_SUBSTEPS {
                let max_dt = self.dt / MAX_SUBSTEPS as f64;
                return Err(Error::CflViolation { dt: self.dt, max_dt });
            }
            self.heat_for(m)?;
            let h = self.dt / m as f64;
            let scale = 1.0 / m as f64;
            self.scratch.resize_with(states.len(), Vec::new);
            for (dst, src) in self.scratch.iter_mut().zip(states.iter()) {
                dst.clear();
                dst.extend_from_slice(src);
            }
            let mut reports = vec![StepReport::default(); states.len()];
            for _ in 0..m {
                for (k, s) in self.scratch.iter_mut().enumerate() {
                    if h > stable_dt_raw(s, &self.model, dx, self.cfl, self.clip) {
                        m *= 2;
                        continue 'attempt;
                    }
                    let adv = explicit_part(s, &self.model, h, dx, &self.incr, scale, &mut self.flux, &mut self.tmp);
                    let heat = if m == 1 {
                        &self.heat
                    } else {
                        self.sub_heat.as_ref().unwrap()
                    };
                    heat.solve_in_place(&mut self.tmp);
                    std::mem::swap(s, &mut self.tmp);
                    let n1 = s.len() - 1;
                    let diff = -2.0 / dx * (s[0] + s[n1]);
                    reports[k].diffusive += scale * diff;
                    reports[k].advective += scale * adv;
                }
            }
            for (dst, src) in states.iter_mut().zip(self.scratch.iter()) {
                dst.copy_from_slice(src);
            }
            return Ok(Advance { substeps: m, reports });
        }
    }
}

/// Norm series and stored states of a single run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub dt: f64,
    pub norm_p: f64,
    pub l1: Vec<f64>,
    pub l2: Vec<f64>,
    pub lp: Vec<f64>,
    pub linf: Vec<f64>,
    /// Entry `j ≥ 1`: boundary flux rate over step `j`; entry 0: the
    /// instantaneous rate at `u₀`.
    pub boundary_flux: Vec<f64>,
    pub mass: Vec<f64>,
    pub stride: usize,
    pub states: Vec<Field>,
    pub max_substeps: usize,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.l1.len() - 1
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    /// `(step index, state)` pairs of the stored states.
    pub fn stored(&self) -> impl Iterator<Item = (usize, &Field)> {
        self.states.iter().enumerate().map(move |(k, f)| (k * self.stride, f))
    }

    pub fn state_at_step(&self, j: usize) -> Option<&Field> {
        if j.is_multiple_of(self.stride) {
            self.states.get(j / self.stride)
        } else {
            None
        }
    }
}

pub(crate) fn instantaneous_boundary_rate(u: &Field, model: &FluxModel) -> f64 {
    let mut flux = vec![0.0; u.len() + 1];
    llf_face_fluxes(u.values(), model, &mut flux);
    boundary_normal_gradient(u) + flux[0] - flux[u.len()]
}

pub(crate) fn check_path(path: &NoisePath, spec: &NoiseSpec, cfg: &SolverConfig) -> Result<usize> {
    let n_steps = cfg.n_steps();
    if path.n_modes() != spec.n_modes() {
        return Err(Error::LengthMismatch {
            expected: spec.n_modes(),
            got: path.n_modes(),
        });
    }
    if path.n_steps() < n_steps {
        return Err(Error::InvalidArgument(format!(
            "noise path has {} steps, run needs {n_steps}",
            path.n_steps()
        )));
    }
    if (path.dt() - cfg.dt).abs() > 1e-15 * cfg.dt {
        return Err(Error::InvalidArgument(format!(
            "noise path dt {} differs from solver dt {}",
            path.dt(),
            cfg.dt
        )));
    }
    Ok(n_steps)
}

pub fn evolve(
    u0: &Field,
    model: &FluxModel,
    spec: &NoiseSpec,
    path: &NoisePath,
    cfg: &SolverConfig,
) -> Result<Trajectory> {
    if !u0.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    let n_steps = check_path(path, spec, cfg)?;
    let grid = *u0.grid();
    let mut integ = Integrator::new(model, spec, &grid, cfg)?;
    let p = cfg.norm_p;
    let mut traj = Trajectory {
        grid,
        dt: cfg.dt,
        norm_p: p,
        l1: Vec::with_capacity(n_steps + 1),
        l2: Vec::with_capacity(n_steps + 1),
        lp: Vec::with_capacity(n_steps + 1),
        linf: Vec::with_capacity(n_steps + 1),
        boundary_flux: Vec::with_capacity(n_steps + 1),
        mass: Vec::with_capacity(n_steps + 1),
        stride: cfg.stride,
        states: vec![u0.clone()],
        max_substeps: 1,
    };
    let record = |traj: &mut Trajectory, u: &Field| -> Result<()> {
        traj.l1.push(lp_norm_pow(u, 1.0));
        traj.l2.push(lp_norm(u, 2.0)?);
        traj.lp.push(lp_norm(u, p)?);
        traj.linf.push(u.max_abs());
        traj.mass.push(u.integral());
        Ok(())
    };
    record(&mut traj, u0)?;
    traj.boundary_flux.push(instantaneous_boundary_rate(u0, model));
    let mut state = vec![u0.values().to_vec()];
    for j in 0..n_steps {
        let adv = integ.advance(&mut state, j as f64 * cfg.dt, path.step(j))?;
        if state[0].iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: j + 1 });
        }
        traj.max_substeps = traj.max_substeps.max(adv.substeps);
        let u = Field::new(grid, state[0].clone()).map_err(|_| Error::NonFinite { step: j + 1 })?;
        record(&mut traj, &u)?;
        traj.boundary_flux.push(adv.reports[0].total());
        if (j + 1) % cfg.stride == 0 {
            traj.states.push(u);
        }
    }
    Ok(traj)
}

/// Explicit envelope `φ⁺(t, x) = (a + b·x)/t` and its mirror
/// `φ⁻(t, x) = −φ⁺(t, L − x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperSolutionParams {
    pub a: f64,
    pub b: f64,
    pub horizon: f64,
    pub alpha: f64,
    pub beta: f64,
    pub domain_span: f64,
    pub z_sup: f64,
    pub z_grad_sum: f64,
    pub length: f64,
}

impl SuperSolutionParams {
    /// Constants for spatial dimension one.
    pub fn from_constants(
        alpha: f64,
        beta: f64,
        domain_span: f64,
        horizon: f64,
        z_sup: f64,
        z_grad_sum: f64,
        length: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && beta >= 0.0 && horizon > 0.0 && z_sup >= 0.0 && z_grad_sum >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "super-solution constants need α > 0, β ≥ 0, T > 0, z ≥ 0; got α = {alpha}, β = {beta}, T = {horizon}"
            )));
        }
        let d = 1.0;
        let core = 1.0 + 2.0 * domain_span + horizon * z_sup + horizon * beta / alpha;
        let b = 1.0_f64.max(2.0 * core / (alpha * d)).max(2.0 * z_grad_sum);
        let a = b * (1.0 + domain_span + horizon * z_sup + horizon * beta / alpha);
        Ok(Self {
            a,
            b,
            horizon,
            alpha,
            beta,
            domain_span,
            z_sup,
            z_grad_sum,
            length,
        })
    }

    pub fn phi_plus(&self, t: f64, x: f64) -> f64 {
        (self.a + self.b * x) / t
    }

    pub fn phi_minus(&self, t: f64, x: f64) -> f64 {
        -self.phi_plus(t, self.length - x)
    }
}

pub fn supersolution_params(
    model: &FluxModel,
    horizon: f64,
    z_sup: f64,
    z_grad_sum: f64,
    grid: &Grid,
) -> Result<SuperSolutionParams> {
    let c = model.coercivity().ok_or(Error::MissingCoercivity)?;
    SuperSolutionParams::from_constants(
        c.alpha,
        c.beta,
        grid.domain_span(),
        horizon,
        z_sup,
        z_grad_sum,
        grid.length(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Envelope {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonReport {
    pub pass: bool,
    /// Largest amount by which `u − z` leaves `[φ⁻, φ⁺]` (negative if inside).
    pub worst_excess: f64,
    pub worst_time: f64,
    pub worst_cell: usize,
    pub worst_side: Envelope,
    pub tol: f64,
    pub checked_states: usize,
}

/// Checks `φ⁻ ≤ u − z ≤ φ⁺` on every stored state with `t ≥ t_min`, where
/// `z` is taken from the stochastic convolution when given (same `dt`).
pub fn verify_comparison(
    traj: &Trajectory,
    params: &SuperSolutionParams,
    t_min: f64,
    z: Option<&ZTrajectory>,
) -> Result<ComparisonReport> {
    if !(t_min > 0.0) {
        return Err(Error::InvalidArgument(format!("t_min must be positive, got {t_min}")));
    }
    let grid = traj.grid;
    let x_max = grid.domain_span();
    let tol = 1e-6 * params.phi_plus(t_min, x_max).abs();
    let centers = grid.centers();
    let mut rep = ComparisonReport {
        pass: true,
        worst_excess: f64::NEG_INFINITY,
        worst_time: t_min,
        worst_cell: 0,
        worst_side: Envelope::Upper,
        tol,
        checked_states: 0,
    };
    for (j, u) in traj.stored() {
        let t = traj.time(j);
        if t < t_min {
            continue;
        }
        let zf = match z {
            Some(zt) => Some(
                zt.field_at_step(j)
                    .ok_or_else(|| Error::InvalidArgument(format!("z is not stored at step {j}")))?,
            ),
            None => None,
        };
        rep.checked_states += 1;
        for (i, (&ui, &x)) in u.values().iter().zip(&centers).enumerate() {
            let w = ui - zf.map_or(0.0, |f| f.values()[i]);
            let up = w - params.phi_plus(t, x);
            let lo = params.phi_minus(t, x) - w;
            let (ex, side) = if up >= lo {
                (up, Envelope::Upper)
            } else {
                (lo, Envelope::Lower)
            };
            if ex > rep.worst_excess {
                rep.worst_excess = ex;
                rep.worst_time = t;
                rep.worst_cell = i;
                rep.worst_side = side;
            }
        }
    }
    rep.pass = rep.worst_excess <= tol;
    Ok(rep)
}

/// Fit of `dN/dt ≈ −c₁N + c₂` with `N = ‖u‖ᵖ_{Lᵖ}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftFit {
    pub c1: f64,
    pub c2: f64,
    pub residual_std: f64,
    /// Fraction of steps with `ΔN/dt ≤ −c₁N + c₂ + 3·residual_std`.
    pub holds_fraction: f64,
    pub n: usize,
    /// The series vanished identically; no regression was performed.
    pub identically_zero: bool,
}

/// Fits the drift of a series `N₀, N₁, …` sampled every `dt`.
pub fn lp_drift_fit(series: &[f64], dt: f64) -> Result<DriftFit> {
    if series.len() < 4 {
        return Err(Error::DegenerateRegression(format!("{} samples", series.len())));
    }
    if series.iter().all(|&v| v == 0.0) {
        return Ok(DriftFit {
            c1: 0.0,
            c2: 0.0,
            residual_std: 0.0,
            holds_fraction: 1.0,
            n: series.len() - 1,
            identically_zero: true,
        });
    }
    let x = &series[..series.len() - 1];
    let y: Vec<f64> = series.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    let fit = linear_fit(x, &y)?;
    let c1 = -fit.slope;
    let c2 = fit.intercept;
    let band = 3.0 * fit.residual_std;
    let holds = x.iter().zip(&y).filter(|(&n, &d)| d <= -c1 * n + c2 + band).count();
    Ok(DriftFit {
        c1,
        c2,
        residual_std: fit.residual_std,
        holds_fraction: holds as f64 / y.len() as f64,
        n: y.len(),
        identically_zero: false,
    })
}

/// Drift audit on the recorded `‖u‖_p` series; `p` must be an even integer
/// and match the norm the trajectory recorded.
pub fn lp_drift_audit(traj: &Trajectory, p: f64) -> Result<DriftFit> {
    if !(p >= 2.0 && p.fract() == 0.0 && (p as u64).is_multiple_of(2)) {
        return Err(Error::InvalidArgument(format!(
            "p must be an even integer ≥ 2, got {p}"
        )));
    }
    if traj.norm_p != p {
        return Err(Error::InvalidArgument(format!(
            "trajectory records p = {}, audit asked for p = {p}",
            traj.norm_p
        )));
    }
    let series: Vec<f64> = traj.lp.iter().map(|v| v.powf(p)).collect();
    lp_drift_fit(&series, traj.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::implicit_diffusion_step;
    use crate::noise::Forcing;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    fn quiet_run(u0: &Field, model: &FluxModel, dt: f64, t: f64, stride: usize) -> Trajectory {
        let spec = NoiseSpec::none();
        let cfg = SolverConfig::new(dt, t).with_stride(stride);
        let path = NoisePath::sample(&spec, 0, dt, cfg.n_steps()).unwrap();
        evolve(u0, model, &spec, &path, &cfg).unwrap()
    }

    #[test]
    fn zero_flux_step_is_heat_step() {
        let g = unit(64);
        let u = Field::from_fn(g, |x| (PI * x).sin());
        let a = step(&u, &FluxModel::zero(), &Field::zeros(g), 1e-3).unwrap();
        let b = implicit_diffusion_step(&u, 1e-3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn burgers_zero_is_fixed_point() {
        let g = unit(32);
        let z = Field::zeros(g);
        let out = step(&z, &FluxModel::burgers(), &z, 1e-2).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = unit(32);
        let u = Field::from_fn(g, |x| 100.0 * (PI * x).sin());
        let err = step(&u, &FluxModel::burgers(), &Field::zeros(g), 1e-2).unwrap_err();
        assert!(matches!(err, Error::CflViolation { .. }));
    }

    #[test]
    fn mass_audit_per_step() {
        let g = unit(128);
        let model = FluxModel::burgers();
        let mut u = Field::from_fn(g, |x| (2.0 * PI * x).sin());
        let heat = ImplicitDiffusion::new(g, 1e-3).unwrap();
        let zero = Field::zeros(g);
        for _ in 0..200 {
            let (next, rep) = step_with(&u, &model, &zero, &heat, 0.5).unwrap();
            let dm = next.integral() - u.integral();
            assert!((dm - 1e-3 * rep.total()).abs() <= 1e-10, "{dm} vs {}", rep.total());
            u = next;
        }
    }

    #[test]
    fn evolve_mass_budget_with_forcing_and_substeps() {
        let g = unit(64);
        let spec = NoiseSpec::none().with_mode(1, 2.0).with_forcing(Forcing::sine(3.0, 1));
        let cfg = SolverConfig::new(5e-3, 0.5);
        let path = NoisePath::sample(&spec, 3, cfg.dt, cfg.n_steps()).unwrap();
        let u0 = Field::from_fn(g, |x| 40.0 * (PI * x).sin());
        let traj = evolve(&u0, &FluxModel::burgers(), &spec, &path, &cfg).unwrap();
        assert!(traj.max_substeps > 1);
        let sampler = ForcingSampler::new(&spec, &g);
        for j in 0..traj.n_steps() {
            let f = sampler.increment(&path, j).integral();
            let dm = traj.mass[j + 1] - traj.mass[j];
            let pred = cfg.dt * traj.boundary_flux[j + 1] + f;
            assert!((dm - pred).abs() <= 1e-10 * (1.0 + traj.l1[j]), "step {j}");
        }
    }

    #[test]
    fn heat_norm_decays_like_first_mode() {
        let g = unit(256);
        let u0 = Field::from_fn(g, |x| (PI * x).sin());
        let traj = quiet_run(&u0, &FluxModel::zero(), 1e-4, 0.2, 2000);
        assert_eq!(traj.l2.len(), 2001);
        let ratio = traj.l2[2000] / traj.l2[0];
        let exact = (-PI * PI * 0.2).exp();
        assert!((ratio / exact - 1.0).abs() < 0.05, "{ratio} vs {exact}");
        assert!(traj.l2.iter().chain(&traj.linf).all(|v| v.is_finite()));
    }

    fn heat_error(n: usize, dt: f64, t: f64) -> f64 {
        let g = unit(n);
        let u0 = Field::from_fn(g, |x| (PI * x).sin());
        let steps = (t / dt).round() as usize;
        let traj = quiet_run(&u0, &FluxModel::zero(), dt, t, steps);
        let decay = (-PI * PI * t).exp();
        traj.states
            .last()
            .unwrap()
            .values()
            .iter()
            .zip(g.centers())
            .map(|(u, x)| (u - decay * (PI * x).sin()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn convergence_orders_against_heat_oracle() {
        let dts = [1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let e: Vec<f64> = dts.iter().map(|&dt| heat_error(256, dt, 0.1)).collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 0.9, "dt order {order}");
        }
        let ns = [8, 16, 32, 64];
        let e: Vec<f64> = ns.iter().map(|&n| heat_error(n, 1e-6, 0.1)).collect();
        for w in e.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.8, "dx order {order}");
        }
    }

    #[test]
    fn weak_form_cancellation_vanishes_with_dx() {
        let model = FluxModel::burgers();
        let mut prev = f64::INFINITY;
        for n in [32, 64, 128, 256, 512] {
            let g = unit(n);
            let u = Field::from_fn(g, |x| (PI * x).sin() + 0.5 * (2.0 * PI * x).sin());
            let mut flux = vec![0.0; n + 1];
            llf_face_fluxes(u.values(), &model, &mut flux);
            let div = crate::grid::divergence_of_face_flux(&flux, &g).unwrap();
            let weak: f64 = g.dx() * u.values().iter().zip(div.values()).map(|(a, b)| a * b).sum::<f64>();
            assert!(weak.abs() < prev);
            prev = weak.abs();
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn supersolution_examples() {
        let p = SuperSolutionParams::from_constants(1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0).unwrap();
        assert_eq!(p.b, 6.0);
        assert_eq!(p.a, 12.0);
        for t in [1e-3, 0.5, 7.0] {
            for x in [0.0, 0.3, 1.0] {
                assert!(p.phi_plus(t, x) > 0.0);
                assert!(p.phi_minus(t, x) < 0.0);
            }
        }
        let g = unit(16);
        assert!(matches!(
            supersolution_params(&FluxModel::zero(), 1.0, 0.0, 0.0, &g),
            Err(Error::MissingCoercivity)
        ));
        let q = supersolution_params(&FluxModel::burgers(), 1.0, 0.0, 0.0, &g).unwrap();
        assert_eq!(q.domain_span, g.domain_span());
        assert_eq!(q.a, q.b * (1.0 + q.domain_span));
    }

    #[test]
    fn comparison_detector() {
        let g = unit(32);
        let model = FluxModel::burgers();
        let zero = quiet_run(&Field::zeros(g), &model, 1e-2, 0.5, 1);
        let params = supersolution_params(&model, 0.5, 0.0, 0.0, &g).unwrap();
        let rep = verify_comparison(&zero, &params, 0.05, None).unwrap();
        assert!(rep.pass);
        assert!(rep.checked_states > 0);

        let mut bad = zero.clone();
        let j = 30;
        bad.states[j].values_mut()[7] = params.phi_plus(bad.time(j), g.center(7)) * 1.5;
        let rep = verify_comparison(&bad, &params, 0.05, None).unwrap();
        assert!(!rep.pass);
        assert_eq!(rep.worst_cell, 7);
        assert_eq!(rep.worst_side, Envelope::Upper);
        assert!((rep.worst_time - bad.time(j)).abs() < 1e-12);
        assert!(verify_comparison(&zero, &params, 0.0, None).is_err());
    }

    #[test]
    fn burgers_large_data_respects_envelopes() {
        let g = unit(64);
        let model = FluxModel::burgers();
        let params = supersolution_params(&model, 1.0, 0.0, 0.0, &g).unwrap();
        for amp in [100.0, -100.0] {
            let u0 = Field::from_fn(g, |x| amp * (3.0 * x).cos());
            let traj = quiet_run(&u0, &model, 1e-3, 1.0, 1);
            let rep = verify_comparison(&traj, &params, 0.05, None).unwrap();
            assert!(rep.pass, "{rep:?}");
        }
    }

    #[test]
    fn heat_drift_rate_is_two_pi_squared() {
        let g = unit(256);
        let u0 = Field::from_fn(g, |x| (PI * x).sin());
        let traj = quiet_run(&u0, &FluxModel::zero(), 1e-4, 0.2, 2000);
        let fit = lp_drift_audit(&traj, 2.0).unwrap();
        let target = 2.0 * PI * PI;
        assert!((fit.c1 / target - 1.0).abs() < 0.1, "c1 {}", fit.c1);
        assert!(fit.c2.abs() < 1e-3);
        assert!(lp_drift_audit(&traj, 3.0).is_err());
    }

    #[test]
    fn zero_series_drift() {
        let g = unit(16);
        let traj = quiet_run(&Field::zeros(g), &FluxModel::burgers(), 1e-2, 1.0, 10);
        let fit = lp_drift_audit(&traj, 2.0).unwrap();
        assert!(fit.identically_zero);
        assert_eq!(fit.c2, 0.0);
        assert!(traj.lp.iter().all(|&v| v == 0.0));
        assert!(lp_drift_fit(&[1.0, 1.0, 1.0, 1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn path_shape_is_checked() {
        let g = unit(16);
        let spec = NoiseSpec::none().with_mode(1, 1.0);
        let cfg = SolverConfig::new(1e-2, 1.0);
        let short = NoisePath::sample(&spec, 0, 1e-2, 10).unwrap();
        assert!(evolve(&Field::zeros(g), &FluxModel::burgers(), &spec, &short, &cfg).is_err());
        let wrong_dt = NoisePath::sample(&spec, 0, 2e-2, 100).unwrap();
        assert!(evolve(&Field::zeros(g), &FluxModel::burgers(), &spec, &wrong_dt, &cfg).is_err());
    }

    fn arb_ordered_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (4usize..24).prop_flat_map(|n| {
            (
                prop::collection::vec(-20.0f64..20.0, n),
                prop::collection::vec(0.0f64..10.0, n),
            )
                .prop_map(|(u, gap)| {
                    let v = u.iter().zip(&gap).map(|(a, b)| a + b).collect();
                    (u, v)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn scheme_preserves_order_and_contracts_l1(
            (u0, v0) in arb_ordered_pair(),
            seed in 0u64..1000,
            cubic in any::<bool>(),
        ) {
            let g = unit(u0.len());
            let model = if cubic { FluxModel::new(crate::flux::FluxKind::Cubic) } else { FluxModel::burgers() };
            let spec = NoiseSpec::none().with_mode(1, 3.0).with_forcing(Forcing::sine(2.0, 2));
            let cfg = SolverConfig::new(1e-2, 0.2);
            let path = NoisePath::sample(&spec, seed, cfg.dt, cfg.n_steps()).unwrap();
            let mut integ = Integrator::new(&model, &spec, &g, &cfg).unwrap();
            let mut s = vec![u0, v0];
            let mut w1 = g.dx() * s[1].iter().zip(&s[0]).map(|(a, b)| (a - b).abs()).sum::<f64>();
            for j in 0..cfg.n_steps() {
                integ.advance(&mut s, j as f64 * cfg.dt, path.step(j)).unwrap();
                for (a, b) in s[0].iter().zip(&s[1]) {
                    prop_assert!(a <= b);
                }
                let w = g.dx() * s[1].iter().zip(&s[0]).map(|(a, b)| (a - b).abs()).sum::<f64>();
                prop_assert!(w <= w1 * (1.0 + 1e-10) + 1e-300);
                w1 = w;
            }
        }
    }
}
