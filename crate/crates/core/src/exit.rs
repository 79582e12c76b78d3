//! Exit probability of the characteristic diffusion
//! `dX = B(u, v)(X) ds + √2 dW` from `(0, L)` and its closed-form lower bound.
//!
//! The diffusion coefficient `√2` makes the generator `Δ + B·∂ₓ`, the
//! adjoint of the operator driving `w`, so the survival probability from `y`
//! equals the surviving mass of the kernel column started at `y`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flux::FluxModel;
use crate::synchro::PairTrajectory;

/// Piecewise-linear drift tables over `[t, t + h]`, one per stored state.
#[derive(Debug, Clone)]
pub struct DriftField {
    length: f64,
    dx: f64,
    pair_dt: f64,
    j0: usize,
    stride: usize,
    first_block: usize,
    /// Node values at `0, x₀, …, x_{n−1}, L`, per stored block.
    tables: Vec<Vec<f64>>,
}

impl DriftField {
    pub fn from_pair(pair: &PairTrajectory, model: &FluxModel, t: f64, h: f64) -> Result<Self> {
        if !(t >= 0.0 && h > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "need t ≥ 0 and h > 0, got t = {t}, h = {h}"
            )));
        }
        let j0 = pair.step_of(t);
        let j1 = pair.step_of(t + h);
        if j1 > pair.n_steps() {
            return Err(Error::InvalidArgument(format!(
                "window [{t}, {}] exceeds the pair run horizon {}",
                t + h,
                pair.horizon()
            )));
        }
        let edge = model.derivative(0.0);
        let first_block = j0 / pair.stride;
        let last_block = (j1 / pair.stride).min(pair.u_states.len() - 1);
        let tables = (first_block..=last_block)
            .map(|k| {
                let (u, v) = (&pair.u_states[k], &pair.v_states[k]);
                let mut t = Vec::with_capacity(u.len() + 2);
                t.push(edge);
                t.extend(
                    u.values()
                        .iter()
                        .zip(v.values())
                        .map(|(&a, &b)| model.secant_slope(a, b)),
                );
                t.push(edge);
                t
            })
            .collect();
        Ok(Self {
            length: pair.grid.length(),
            dx: pair.grid.dx(),
            pair_dt: pair.dt,
            j0,
            stride: pair.stride,
            first_block,
            tables,
        })
    }

    /// Constant drift `b` on `(0, L)` (including the boundary nodes).
    pub fn constant(length: f64, n_cells: usize, b: f64) -> Self {
        Self {
            length,
            dx: length / n_cells as f64,
            pair_dt: f64::INFINITY,
            j0: 0,
            stride: 1,
            first_block: 0,
            tables: vec![vec![b; n_cells + 2]],
        }
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn table_at(&self, s: f64) -> &[f64] {
        let j = if self.pair_dt.is_finite() {
            self.j0 + (s / self.pair_dt).floor() as usize
        } else {
            0
        };
        let k = (j / self.stride)
            .saturating_sub(self.first_block)
            .min(self.tables.len() - 1);
        &self.tables[k]
    }

    /// Drift at elapsed time `s` and position `x ∈ [0, L]`.
    pub fn eval(&self, s: f64, x: f64) -> f64 {
        interpolate(self.table_at(s), self.dx, self.length, x)
    }
}

fn interpolate(table: &[f64], dx: f64, length: f64, x: f64) -> f64 {
    let n = table.len() - 2;
    // node positions: 0, (i + ½)dx, L
    let node = |k: usize| -> f64 {
        if k == 0 {
            0.0
        } else if k == n + 1 {
            length
        } else {
            (k as f64 - 0.5) * dx
        }
    };
    let k = (((x / dx) + 0.5).floor().max(0.0) as usize).min(n);
    let (x0, x1) = (node(k), node(k + 1));
    let f = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
    table[k] + (table[k + 1] - table[k]) * f
}

fn path_rng(seed: u64, start_index: usize, path_index: usize) -> ChaCha8Rng {
    let mixed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17)
        ^ (start_index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(path_index as u64);
    rng
}

/// Number of paths started at `y0` that leave `(0, L)` within `h`.
/// Between grid points a surviving step still exits with the Brownian
/// bridge crossing probability `exp(−d₀d₁/ds)` per wall.
/// Paths run on the current rayon pool; the count does not depend on it.
pub fn simulate_exit_count(
    drift: &DriftField,
    h: f64,
    y0: f64,
    n_paths: usize,
    sde_dt: f64,
    seed: u64,
    start_index: usize,
) -> Result<usize> {
    let len = drift.length();
    if !(y0 > 0.0 && y0 < len) {
        return Err(Error::InvalidArgument(format!("start {y0} is not inside (0, {len})")));
    }
    if !(sde_dt > 0.0) || sde_dt > h {
        return Err(Error::InvalidArgument(format!(
            "sde_dt must lie in (0, h], got {sde_dt} with h = {h}"
        )));
    }
    let k = (h / sde_dt).ceil() as usize;
    let ds = h / k as f64;
    let sd = (2.0 * ds).sqrt();
    Ok((0..n_paths)
        .into_par_iter()
        .filter(|&p| {
            let mut rng = path_rng(seed, start_index, p);
            let mut x = y0;
            for i in 0..k {
                let b = drift.eval(i as f64 * ds, x);
                let z: f64 = rng.sample(StandardNormal);
                let next = x + b * ds + sd * z;
                if next <= 0.0 || next >= len {
                    return true;
                }
                let pl = (-x * next / ds).exp();
                let pr = (-(len - x) * (len - next) / ds).exp();
                let u: f64 = rng.random();
                if u < pl + pr - pl * pr {
                    return true;
                }
                x = next;
            }
            false
        })
        .count())
}

/// Exit fraction from `y0` over `[t, t + h]` with drift from `pair`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_exit(
    pair: &PairTrajectory,
    model: &FluxModel,
    t: f64,
    h: f64,
    y0: f64,
    n_paths: usize,
    sde_dt: f64,
    seed: u64,
) -> Result<f64> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("n_paths must be positive".into()));
    }
    let drift = DriftField::from_pair(pair, model, t, h)?;
    Ok(simulate_exit_count(&drift, h, y0, n_paths, sde_dt, seed, 0)? as f64 / n_paths as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub start_points: Vec<f64>,
    pub fractions: Vec<f64>,
    pub argmin: usize,
}

impl ExitEstimate {
    pub fn argmin_start(&self) -> f64 {
        self.start_points[self.argmin]
    }
}

/// `sde_dt = min(stride·dt, h/200)`.
pub fn default_sde_dt(pair: &PairTrajectory, h: f64) -> f64 {
    (pair.stride as f64 * pair.dt).min(h / 200.0)
}

/// Start points `yᵢ = (i + 1)L/(n + 1)`.
pub fn start_points(length: f64, n_starts: usize) -> Vec<f64> {
    (0..n_starts)
        .map(|i| (i + 1) as f64 * length / (n_starts + 1) as f64)
        .collect()
}

pub fn estimate_p_inf_with(
    drift: &DriftField,
    h: f64,
    n_starts: usize,
    n_paths: usize,
    sde_dt: f64,
    seed: u64,
) -> Result<ExitEstimate> {
    if n_paths == 0 || n_starts == 0 {
        return Err(Error::InvalidArgument("n_paths and n_starts must be positive".into()));
    }
    let starts = start_points(drift.length(), n_starts);
    let fractions: Vec<f64> = starts
        .iter()
        .enumerate()
        .map(|(i, &y)| simulate_exit_count(drift, h, y, n_paths, sde_dt, seed, i).map(|c| c as f64 / n_paths as f64))
        .collect::<Result<_>>()?;
    let mut argmin = 0;
    for (i, &f) in fractions.iter().enumerate() {
        if f < fractions[argmin] {
            argmin = i;
        }
    }
    let p = fractions[argmin];
    Ok(ExitEstimate {
        p_hat: p,
        stderr: (p * (1.0 - p) / n_paths as f64).sqrt(),
        n_paths,
        start_points: starts,
        fractions,
        argmin,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_p_inf(
    pair: &PairTrajectory,
    model: &FluxModel,
    t: f64,
    h: f64,
    n_starts: usize,
    n_paths: usize,
    seed: u64,
    sde_dt: Option<f64>,
) -> Result<ExitEstimate> {
    let drift = DriftField::from_pair(pair, model, t, h)?;
    let sde_dt = sde_dt.unwrap_or_else(|| default_sde_dt(pair, h));
    estimate_p_inf_with(&drift, h, n_starts, n_paths, sde_dt, seed)
}

/// `c·exp(−h⁻¹(C + B_sup²))` with `c = erf(1/√2)²` and `C = L + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GirsanovBound {
    pub c: f64,
    pub c_geom: f64,
}

impl GirsanovBound {
    pub fn for_interval(length: f64) -> Self {
        let small_ball = libm::erf(std::f64::consts::FRAC_1_SQRT_2);
        Self {
            c: small_ball * small_ball,
            c_geom: length + 1.0,
        }
    }

    pub fn exponent(&self, h: f64, b_sup: f64) -> f64 {
        -(self.c_geom + b_sup * b_sup) / h
    }

    pub fn bound(&self, h: f64, b_sup: f64) -> Result<f64> {
        if !(h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidArgument(format!("h must lie in (0, 1], got {h}")));
        }
        if !(b_sup >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "B_sup must be nonnegative, got {b_sup}"
            )));
        }
        Ok(self.c * self.exponent(h, b_sup).exp())
    }
}

pub fn girsanov_bound(length: f64, h: f64, b_sup: f64) -> Result<f64> {
    GirsanovBound::for_interval(length).bound(h, b_sup)
}

/// Bounds below this are reported as numerically zero.
pub const NUMERICALLY_ZERO: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundAudit {
    pub pass: bool,
    pub numerically_zero: bool,
    pub upper_estimate: f64,
    pub bound: f64,
}

/// Passes iff `p̂ + 3·stderr ≥ bound`; a numerically zero bound passes
/// vacuously and is flagged.
pub fn bound_audit(estimate: &ExitEstimate, bound_value: f64) -> BoundAudit {
    let upper = estimate.p_hat + 3.0 * estimate.stderr;
    let numerically_zero = bound_value < NUMERICALLY_ZERO;
    BoundAudit {
        pass: upper >= bound_value || numerically_zero,
        numerically_zero,
        upper_estimate: upper,
        bound: bound_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid};
    use crate::noise::{Forcing, NoisePath, NoiseSpec};
    use crate::solver::SolverConfig;
    use crate::synchro::{couple_evolve, kernel_mass_loss, kernel_mass_loss_frozen, FrozenLinearEvolution};
    use std::f64::consts::PI;

    fn heat_mass(y: f64, h: f64) -> f64 {
        (1..2000)
            .step_by(2)
            .map(|k| {
                let k = k as f64;
                4.0 / (k * PI) * (k * PI * y).sin() * (-k * k * PI * PI * h).exp()
            })
            .sum()
    }

    /// `P(min_{s ≤ h} W_s ≤ −a)` for `√2`-scaled Brownian motion.
    fn one_sided_exit(a: f64, h: f64) -> f64 {
        libm::erfc(a / (2.0 * h.sqrt()))
    }

    #[test]
    fn girsanov_constants() {
        let g = GirsanovBound::for_interval(1.0);
        assert!((libm::erf(std::f64::consts::FRAC_1_SQRT_2) - 0.682689).abs() < 1e-6);
        assert!((g.c - 0.4661).abs() < 1e-4);
        assert_eq!(g.c_geom, 2.0);
        let b = g.bound(1.0, 0.0).unwrap();
        assert!((b - 0.4661 * (-2.0f64).exp()).abs() < 1e-4);
        assert!((b - 0.0631).abs() < 1e-4);
        assert!(g.bound(0.5, 1.0).unwrap() < g.bound(1.0, 1.0).unwrap());
        let mut prev = b;
        for bs in [0.5, 1.0, 2.0, 5.0, 20.0] {
            let v = g.bound(1.0, bs).unwrap();
            assert!(v < prev && v > 0.0 || v == 0.0);
            prev = v;
        }
        assert!(g.bound(0.0, 0.0).is_err());
        assert!(g.bound(1.5, 0.0).is_err());
    }

    fn est(p: f64, stderr: f64) -> ExitEstimate {
        ExitEstimate {
            p_hat: p,
            stderr,
            n_paths: 100,
            start_points: vec![0.5],
            fractions: vec![p],
            argmin: 0,
        }
    }

    #[test]
    fn bound_audit_cases() {
        let p = 1.0 - 4.0 / PI * (-PI * PI / 2.0).exp();
        assert!((p - 0.991).abs() < 1e-3);
        let bound = girsanov_bound(1.0, 1.0, 0.0).unwrap();
        let a = bound_audit(&est(p, 0.001), bound);
        assert!(a.pass && !a.numerically_zero);
        assert!(!bound_audit(&est(0.0, 0.0), bound).pass);
        let tiny = girsanov_bound(1.0, 0.05, 5.0).unwrap();
        let a = bound_audit(&est(0.0, 0.0), tiny);
        assert!(a.numerically_zero);
        assert!(a.pass);
    }

    #[test]
    fn drift_interpolation_hits_nodes_and_boundary_values() {
        let table = vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
        let dx = 0.25;
        assert_eq!(interpolate(&table, dx, 1.0, 0.0), 1.0);
        assert_eq!(interpolate(&table, dx, 1.0, 0.125), 2.0);
        assert_eq!(interpolate(&table, dx, 1.0, 0.375), 4.0);
        assert_eq!(interpolate(&table, dx, 1.0, 1.0), 32.0);
        assert!((interpolate(&table, dx, 1.0, 0.25) - 3.0).abs() < 1e-15);
        assert!((interpolate(&table, dx, 1.0, 0.9375) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn long_horizon_almost_surely_exits() {
        let d = DriftField::constant(1.0, 64, 0.0);
        let c = simulate_exit_count(&d, 5.0, 0.5, 10_000, 5e-3, 1, 0).unwrap();
        assert!(c as f64 / 1e4 >= 0.99);
    }

    #[test]
    fn short_horizon_rarely_exits() {
        let d = DriftField::constant(1.0, 64, 0.0);
        let c = simulate_exit_count(&d, 1e-3, 0.5, 2000, 1e-5, 2, 0).unwrap();
        assert_eq!(c, 0);
    }

    #[test]
    fn near_boundary_start_exits_quickly() {
        let dx = 1.0 / 64.0;
        let d = DriftField::constant(1.0, 64, 0.0);
        let h = 0.01;
        let c = simulate_exit_count(&d, h, dx / 2.0, 10_000, h / 200.0, 3, 0).unwrap();
        let frac = c as f64 / 1e4;
        let exact = one_sided_exit(dx / 2.0, h);
        assert!(exact > 0.9);
        assert!(
            (frac - exact).abs() <= 4.0 * (exact * (1.0 - exact) / 1e4).sqrt() + 1e-3,
            "{frac} vs {exact}"
        );
    }

    #[test]
    fn argmin_is_central_and_matches_kernel() {
        let g = Grid::new(1.0, 128).unwrap();
        let d = DriftField::constant(1.0, 128, 0.0);
        let h = 0.1;
        let e = estimate_p_inf_with(&d, h, 9, 10_000, h / 200.0, 7).unwrap();
        assert_eq!(e.argmin_start(), 0.5);
        assert!(e.stderr <= 0.5 / (e.n_paths as f64).sqrt());
        let evo = FrozenLinearEvolution::from_cell_speeds(&g, 1e-3, 100, 0.0, |_| vec![0.0; 128]).unwrap();
        let k = kernel_mass_loss_frozen(&evo).unwrap();
        assert!((e.p_hat - k.p_hat).abs() <= 3.0 * (e.stderr + 10.0 * g.dx()));
        let exact = 1.0 - heat_mass(0.5, h);
        assert!((e.p_hat - exact).abs() <= 4.0 * e.stderr, "{} vs {exact}", e.p_hat);
        assert!(estimate_p_inf_with(&d, h, 9, 0, h / 200.0, 7).is_err());
    }

    #[test]
    fn exit_is_deterministic_in_seed() {
        let d = DriftField::constant(1.0, 32, 1.5);
        let a = simulate_exit_count(&d, 0.2, 0.3, 3000, 1e-3, 9, 4).unwrap();
        let b = simulate_exit_count(&d, 0.2, 0.3, 3000, 1e-3, 9, 4).unwrap();
        assert_eq!(a, b);
        assert!(simulate_exit_count(&d, 0.2, 0.3, 10, 0.5, 9, 4).is_err());
        assert!(simulate_exit_count(&d, 0.2, 1.3, 10, 1e-3, 9, 4).is_err());
    }

    #[test]
    fn burgers_pair_duality() {
        let g = Grid::new(1.0, 64).unwrap();
        let model = FluxModel::burgers();
        let spec = NoiseSpec::none().with_forcing(Forcing::sine(3.0, 1));
        let cfg = SolverConfig::new(1e-3, 1.0);
        let path = NoisePath::sample(&spec, 0, cfg.dt, cfg.n_steps()).unwrap();
        let u0 = Field::from_fn(g, |x| 6.0 * (PI * x).sin());
        let v0 = Field::from_fn(g, |x| -2.0 * (PI * x).sin());
        let pair = couple_evolve(&u0, &v0, &model, &spec, &path, &cfg).unwrap();
        let (t, h) = (0.2, 0.1);
        let mc = estimate_p_inf(&pair, &model, t, h, 16, 4000, 5, None).unwrap();
        let k = kernel_mass_loss(&pair, &model, t, h).unwrap();
        assert!(
            (mc.p_hat - k.p_hat).abs() <= 3.0 * (mc.stderr + 10.0 * g.dx()),
            "{} vs {}",
            mc.p_hat,
            k.p_hat
        );
        assert!(simulate_exit(&pair, &model, t, h, 0.5, 0, 1e-3, 1).is_err());
    }
}
