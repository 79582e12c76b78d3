//! Two solutions driven by one noise path, their difference `w = u − v`,
//! and the linear evolution `∂ₜw + ∂ₓ(B(u, v)w) − Δw = 0` with the
//! coefficient frozen from a stored pair run.

use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::grid::{lp_norm, lp_norm_pow, Field, Grid, ImplicitDiffusion};
use crate::noise::{NoisePath, NoiseSpec};
use crate::solver::{check_path, evolve, instantaneous_boundary_rate, Integrator, SolverConfig};
use crate::stats::linear_fit;

/// Per-step norm series of one member of a pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormSeries {
    pub l1: Vec<f64>,
    pub lp: Vec<f64>,
    pub linf: Vec<f64>,
}

impl NormSeries {
    fn push(&mut self, u: &Field, p: f64) -> Result<()> {
        self.l1.push(lp_norm_pow(u, 1.0));
        self.lp.push(lp_norm(u, p)?);
        self.linf.push(u.max_abs());
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PairTrajectory {
    pub grid: Grid,
    pub dt: f64,
    pub norm_p: f64,
    pub seed: u64,
    /// `‖wₜ‖_{L¹}` at every step.
    pub w_l1: Vec<f64>,
    /// `∫_{∂𝒟} 𝐧·∇w` plus the advective boundary flux of `w`, per step
    /// (entry 0: instantaneous at `t = 0`).
    pub boundary_diss: Vec<f64>,
    /// `max(‖uₜ‖∞, ‖vₜ‖∞)`.
    pub sup_norms: Vec<f64>,
    pub u_norms: NormSeries,
    pub v_norms: NormSeries,
    pub stride: usize,
    pub u_states: Vec<Field>,
    pub v_states: Vec<Field>,
    pub max_substeps: usize,
}

impl PairTrajectory {
    pub fn n_steps(&self) -> usize {
        self.w_l1.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps() as f64 * self.dt
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn step_of(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    /// Stored `(u, v)` in force at step `j` (latest stored state at or
    /// before `j`).
    pub fn states_at(&self, j: usize) -> (&Field, &Field) {
        let k = (j / self.stride).min(self.u_states.len() - 1);
        (&self.u_states[k], &self.v_states[k])
    }

    /// `(‖u‖ᵖ + ‖v‖ᵖ)^{1/p}` at every step.
    pub fn pair_lp(&self) -> Vec<f64> {
        let p = self.norm_p;
        self.u_norms
            .lp
            .iter()
            .zip(&self.v_norms.lp)
            .map(|(a, b)| (a.powf(p) + b.powf(p)).powf(1.0 / p))
            .collect()
    }
}

pub fn couple_evolve(
    u0: &Field,
    v0: &Field,
    model: &FluxModel,
    spec: &NoiseSpec,
    path: &NoisePath,
    cfg: &SolverConfig,
) -> Result<PairTrajectory> {
    if u0.grid() != v0.grid() {
        return Err(Error::InvalidArgument("u₀ and v₀ live on different grids".into()));
    }
    if !u0.is_finite() || !v0.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    let n_steps = check_path(path, spec, cfg)?;
    let grid = *u0.grid();
    let p = cfg.norm_p;
    let mut integ = Integrator::new(model, spec, &grid, cfg)?;
    let mut pair = PairTrajectory {
        grid,
        dt: cfg.dt,
        norm_p: p,
        seed: path.seed(),
        w_l1: Vec::with_capacity(n_steps + 1),
        boundary_diss: Vec::with_capacity(n_steps + 1),
        sup_norms: Vec::with_capacity(n_steps + 1),
        u_norms: NormSeries::default(),
        v_norms: NormSeries::default(),
        stride: cfg.stride,
        u_states: vec![u0.clone()],
        v_states: vec![v0.clone()],
        max_substeps: 1,
    };
    let dx = grid.dx();
    let record = |pair: &mut PairTrajectory, u: &Field, v: &Field| -> Result<()> {
        pair.w_l1.push(
            dx * u
                .values()
                .iter()
                .zip(v.values())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>(),
        );
        pair.sup_norms.push(u.max_abs().max(v.max_abs()));
        pair.u_norms.push(u, p)?;
        pair.v_norms.push(v, p)
    };
    record(&mut pair, u0, v0)?;
    pair.boundary_diss
        .push(instantaneous_boundary_rate(u0, model) - instantaneous_boundary_rate(v0, model));
    let mut states = vec![u0.values().to_vec(), v0.values().to_vec()];
    for j in 0..n_steps {
        let adv = integ.advance(&mut states, j as f64 * cfg.dt, path.step(j))?;
        if states.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: j + 1 });
        }
        pair.max_substeps = pair.max_substeps.max(adv.substeps);
        let u = Field::new(grid, states[0].clone()).map_err(|_| Error::NonFinite { step: j + 1 })?;
        let v = Field::new(grid, states[1].clone()).map_err(|_| Error::NonFinite { step: j + 1 })?;
        record(&mut pair, &u, &v)?;
        pair.boundary_diss.push(adv.reports[0].total() - adv.reports[1].total());
        if (j + 1) % cfg.stride == 0 {
            pair.u_states.push(u);
            pair.v_states.push(v);
        }
    }
    Ok(pair)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovFit {
    pub lambda_hat: f64,
    pub stderr: f64,
    pub fit_start: f64,
    pub fit_end: f64,
    pub n_points: usize,
    /// Time at which `‖w‖₁` reached numerical zero, if it did after `t_burn`;
    /// the fit then stops there.
    pub zero_hit: Option<f64>,
}

/// Relative level below which `‖w‖₁` counts as numerically zero.
pub const SYNC_RESOLUTION: f64 = 1e-11;

/// Least squares slope of `log ‖wₜ‖₁` on `[t_burn, T]`.
pub fn estimate_lyapunov(pair: &PairTrajectory, t_burn: f64) -> Result<LyapunovFit> {
    if !(t_burn >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "t_burn must be nonnegative, got {t_burn}"
        )));
    }
    let scale = pair.w_l1[0]
        .max(pair.u_norms.l1.iter().copied().fold(0.0, f64::max))
        .max(pair.v_norms.l1.iter().copied().fold(0.0, f64::max));
    let floor = SYNC_RESOLUTION * scale;
    let hit = pair.w_l1.iter().position(|&w| w <= floor);
    let j0 = pair.step_of(t_burn);
    if j0 >= pair.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "t_burn = {t_burn} leaves no fit window before T = {}",
            pair.horizon()
        )));
    }
    let j1 = match hit {
        Some(h) if h <= j0 => {
            return Err(Error::SynchronisedBelowResolution { hit_time: pair.time(h) });
        }
        Some(h) => h - 1,
        None => pair.n_steps(),
    };
    let xs: Vec<f64> = (j0..=j1).map(|j| pair.time(j)).collect();
    let ys: Vec<f64> = (j0..=j1).map(|j| pair.w_l1[j].ln()).collect();
    let fit = linear_fit(&xs, &ys)?;
    Ok(LyapunovFit {
        lambda_hat: fit.slope,
        stderr: fit.slope_stderr,
        fit_start: xs[0],
        fit_end: xs[xs.len() - 1],
        n_points: xs.len(),
        zero_hit: hit.map(|h| pair.time(h)),
    })
}

#[derive(Debug, Clone)]
struct FrozenStep {
    /// Face speeds, `n + 1` entries.
    faces: Vec<f64>,
    substeps: usize,
}

/// Linear monotone evolution of `∂ₜw + ∂ₓ(b w) − Δw = 0` over a fixed
/// sequence of steps with frozen face speeds (upwind advection, implicit
/// diffusion, zero boundary value).
#[derive(Debug, Clone)]
pub struct FrozenLinearEvolution {
    grid: Grid,
    dt: f64,
    steps: Vec<FrozenStep>,
    heats: BTreeMap<usize, ImplicitDiffusion>,
}

impl FrozenLinearEvolution {
    /// Builds the evolution from cell speeds `cell_speed(step)` and the
    /// boundary speed `edge` used as the ghost-side value on both outer faces.
    pub fn from_cell_speeds(
        grid: &Grid,
        dt: f64,
        n_steps: usize,
        edge: f64,
        mut cell_speed: impl FnMut(usize) -> Vec<f64>,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let n = grid.n_cells();
        let dx = grid.dx();
        let mut steps = Vec::with_capacity(n_steps);
        let mut heats = BTreeMap::new();
        for j in 0..n_steps {
            let b = cell_speed(j);
            if b.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    got: b.len(),
                });
            }
            let mut faces = Vec::with_capacity(n + 1);
            faces.push(0.5 * (edge + b[0]));
            for i in 1..n {
                faces.push(0.5 * (b[i - 1] + b[i]));
            }
            faces.push(0.5 * (b[n - 1] + edge));
            let substeps = substeps_for(&faces, dt, dx);
            insert_heat(&mut heats, grid, dt, substeps)?;
            steps.push(FrozenStep { faces, substeps });
        }
        Ok(Self {
            grid: *grid,
            dt,
            steps,
            heats,
        })
    }

    /// Frozen field `B(u_s, v_s)` from the stored pair states over
    /// `[t, t + h]`, piecewise constant at the storage stride.
    pub fn from_pair(pair: &PairTrajectory, model: &FluxModel, t: f64, h: f64) -> Result<Self> {
        let (j0, n) = window(pair, t, h)?;
        Self::from_cell_speeds(&pair.grid, pair.dt, n, model.derivative(0.0), |k| {
            let (u, v) = pair.states_at(j0 + k);
            u.values()
                .iter()
                .zip(v.values())
                .map(|(&a, &b)| model.secant_slope(a, b))
                .collect()
        })
    }

    /// The same frozen coefficients on steps of `dt/factor`.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidArgument("refinement factor must be positive".into()));
        }
        let dt = self.dt / factor as f64;
        let dx = self.grid.dx();
        let mut steps = Vec::with_capacity(self.steps.len() * factor);
        let mut heats = BTreeMap::new();
        for st in &self.steps {
            let substeps = substeps_for(&st.faces, dt, dx);
            insert_heat(&mut heats, &self.grid, dt, substeps)?;
            for _ in 0..factor {
                steps.push(FrozenStep {
                    faces: st.faces.clone(),
                    substeps,
                });
            }
        }
        Ok(Self {
            grid: self.grid,
            dt,
            steps,
            heats,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn explicit(&self, faces: &[f64], h: f64, w: &[f64], out: &mut [f64]) {
        let n = w.len();
        let r = h / self.grid.dx();
        let flux = |k: usize| -> f64 {
            let b = faces[k];
            let wl = if k == 0 { 0.0 } else { w[k - 1] };
            let wr = if k == n { 0.0 } else { w[k] };
            b.max(0.0) * wl + b.min(0.0) * wr
        };
        let mut left = flux(0);
        for i in 0..n {
            let right = flux(i + 1);
            out[i] = w[i] - r * (right - left);
            left = right;
        }
    }

    fn explicit_adjoint(&self, faces: &[f64], h: f64, phi: &[f64], out: &mut [f64]) {
        let n = phi.len();
        let r = h / self.grid.dx();
        for j in 0..n {
            let right = if j + 1 < n { phi[j + 1] } else { 0.0 };
            let left = if j > 0 { phi[j - 1] } else { 0.0 };
            let d = faces[j + 1].max(0.0) * (phi[j] - right) + faces[j].min(0.0) * (left - phi[j]);
            out[j] = phi[j] - r * d;
        }
    }

    /// Evolves `w₀` through every step; `monitor` sees the state after each
    /// outer step.
    pub fn apply(&self, w0: &[f64], mut monitor: impl FnMut(usize, &[f64])) -> Vec<f64> {
        let mut w = w0.to_vec();
        let mut tmp = vec![0.0; w.len()];
        for (j, st) in self.steps.iter().enumerate() {
            let h = self.dt / st.substeps as f64;
            let heat = &self.heats[&st.substeps];
            for _ in 0..st.substeps {
                self.explicit(&st.faces, h, &w, &mut tmp);
                heat.solve_in_place(&mut tmp);
                std::mem::swap(&mut w, &mut tmp);
            }
            monitor(j, &w);
        }
        w
    }

    /// Transpose of [`FrozenLinearEvolution::apply`] applied to `phi`.
    pub fn apply_adjoint(&self, phi: &[f64]) -> Vec<f64> {
        let mut f = phi.to_vec();
        let mut tmp = vec![0.0; f.len()];
        for st in self.steps.iter().rev() {
            let h = self.dt / st.substeps as f64;
            let heat = &self.heats[&st.substeps];
            for _ in 0..st.substeps {
                heat.solve_in_place(&mut f);
                self.explicit_adjoint(&st.faces, h, &f, &mut tmp);
                std::mem::swap(&mut f, &mut tmp);
            }
        }
        f
    }
}

fn substeps_for(faces: &[f64], dt: f64, dx: f64) -> usize {
    let bmax = faces.iter().fold(0.0_f64, |m, f| m.max(f.abs()));
    if bmax > 0.0 {
        ((dt * 2.0 * bmax / dx).ceil() as usize).max(1)
    } else {
        1
    }
}

fn insert_heat(heats: &mut BTreeMap<usize, ImplicitDiffusion>, grid: &Grid, dt: f64, substeps: usize) -> Result<()> {
    if let std::collections::btree_map::Entry::Vacant(e) = heats.entry(substeps) {
        e.insert(ImplicitDiffusion::new(*grid, dt / substeps as f64)?);
    }
    Ok(())
}

fn window(pair: &PairTrajectory, t: f64, h: f64) -> Result<(usize, usize)> {
    if !(t >= 0.0) || !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need t ≥ 0 and h ≥ 0, got t = {t}, h = {h}"
        )));
    }
    let j0 = pair.step_of(t);
    let n = (h / pair.dt).round() as usize;
    if j0 + n > pair.n_steps() {
        return Err(Error::InvalidArgument(format!(
            "window [{t}, {}] exceeds the pair run horizon {}",
            t + h,
            pair.horizon()
        )));
    }
    Ok((j0, n))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelEstimate {
    /// `1 − max_j mass_j`: the smallest mass loss over source cells.
    pub p_hat: f64,
    /// Source cell with the largest surviving mass.
    pub argmax_cell: usize,
    /// Surviving mass of every column at `t + h`.
    pub masses: Vec<f64>,
    /// Largest column mass seen at any intermediate step.
    pub max_intermediate_mass: f64,
    /// Most negative column value seen (0 if none).
    pub min_value: f64,
}

/// Evolves every δ-column through `evo` (columns in parallel on the
/// current rayon pool) and reports the mass loss.
pub fn kernel_mass_loss_frozen(evo: &FrozenLinearEvolution) -> Result<KernelEstimate> {
    let grid = *evo.grid();
    let n = grid.n_cells();
    let dx = grid.dx();
    let cols: Vec<(f64, f64, f64, usize)> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut w0 = vec![0.0; n];
            w0[j] = 1.0 / dx;
            let mut max_mass = 1.0_f64;
            let mut min_val = 0.0_f64;
            let mut neg_cell = usize::MAX;
            let w = evo.apply(&w0, |_, w| {
                max_mass = max_mass.max(dx * w.iter().sum::<f64>());
                for (i, &v) in w.iter().enumerate() {
                    if v < min_val {
                        min_val = v;
                        neg_cell = i;
                    }
                }
            });
            (dx * w.iter().sum::<f64>(), max_mass, min_val, neg_cell)
        })
        .collect();
    let mut est = KernelEstimate {
        p_hat: 0.0,
        argmax_cell: 0,
        masses: Vec::with_capacity(n),
        max_intermediate_mass: 0.0,
        min_value: 0.0,
    };
    let mut best = f64::NEG_INFINITY;
    for (j, &(mass, max_mass, min_val, cell)) in cols.iter().enumerate() {
        if min_val < -1e-10 {
            return Err(Error::MonotonicityViolation {
                column: j,
                cell,
                value: min_val,
            });
        }
        est.min_value = est.min_value.min(min_val);
        est.max_intermediate_mass = est.max_intermediate_mass.max(max_mass);
        if mass > best {
            best = mass;
            est.argmax_cell = j;
        }
        est.masses.push(mass);
    }
    est.p_hat = (1.0 - best).clamp(0.0, 1.0);
    Ok(est)
}

/// Richardson estimate `2|p̂(dt) − p̂(dt/2)|` of the time discretisation
/// error of `p̂`.
pub fn kernel_time_error(evo: &FrozenLinearEvolution, coarse: &KernelEstimate) -> Result<f64> {
    let fine = kernel_mass_loss_frozen(&evo.refined(2)?)?;
    Ok(2.0 * (coarse.p_hat - fine.p_hat).abs())
}

/// `p̂_kernel` over `[t, t + h]` with the coefficient frozen from `pair`.
pub fn kernel_mass_loss(pair: &PairTrajectory, model: &FluxModel, t: f64, h: f64) -> Result<KernelEstimate> {
    let evo = FrozenLinearEvolution::from_pair(pair, model, t, h)?;
    kernel_mass_loss_frozen(&evo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionAudit {
    pub pass: bool,
    pub w_start: f64,
    pub w_end: f64,
    pub p_hat: f64,
    pub tol: f64,
    /// `w_end / w_start` (1 if `w_start = 0`).
    pub ratio: f64,
}

pub fn strict_contraction_audit(pair: &PairTrajectory, t: f64, h: f64, p_hat: f64) -> Result<ContractionAudit> {
    if !(0.0..=1.0).contains(&p_hat) {
        return Err(Error::InvalidArgument(format!("p̂ must lie in [0, 1], got {p_hat}")));
    }
    let (j0, n) = window(pair, t, h)?;
    let tol = 1e-6 + 10.0 * pair.grid.dx();
    let w_start = pair.w_l1[j0];
    let w_end = pair.w_l1[j0 + n];
    let ratio = if w_start > 0.0 { w_end / w_start } else { 1.0 };
    Ok(ContractionAudit {
        pass: w_end <= (1.0 - p_hat + tol) * w_start,
        w_start,
        w_end,
        p_hat,
        tol,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathwiseBound {
    /// `𝔠̂` per seed: sup over the initial set and `s ∈ [1, 2]` of `‖u_s‖∞`.
    pub per_seed: Vec<f64>,
    /// `[seed][initial condition]` suprema.
    pub per_initial: Vec<Vec<f64>>,
    /// `sup |B|` over the ball of radius `𝔠̂`, per seed.
    pub b_bound: Vec<f64>,
}

/// Runs every initial condition on every seed up to `t = 2` (seeds and
/// initial conditions in parallel on the current rayon pool).
pub fn pathwise_bound_stats(
    model: &FluxModel,
    spec: &NoiseSpec,
    seeds: &[u64],
    u0_set: &[Field],
    cfg: &SolverConfig,
) -> Result<PathwiseBound> {
    if model.coercivity().is_none() {
        return Err(Error::MissingCoercivity);
    }
    let mut run_cfg = *cfg;
    run_cfg.t_final = cfg.t_final.max(2.0);
    let n_steps = run_cfg.n_steps();
    let j1 = (1.0 / run_cfg.dt).round() as usize;
    let j2 = (2.0 / run_cfg.dt).round() as usize;
    let per_initial: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| -> Result<Vec<f64>> {
            let path = NoisePath::sample(spec, seed, run_cfg.dt, n_steps)?;
            u0_set
                .par_iter()
                .map(|u0| {
                    let mut c = run_cfg;
                    c.stride = usize::MAX;
                    let traj = evolve(u0, model, spec, &path, &c)?;
                    Ok(traj.linf[j1..=j2].iter().copied().fold(0.0, f64::max))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let per_seed: Vec<f64> = per_initial
        .iter()
        .map(|v| v.iter().copied().fold(0.0, f64::max))
        .collect();
    let b_bound = per_seed.iter().map(|&c| model.lipschitz_bound_on(-c, c)).collect();
    Ok(PathwiseBound {
        per_seed,
        per_initial,
        b_bound,
    })
}
