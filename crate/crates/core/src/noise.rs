//! Additive noise `ξ = ψ₀(t, x) + Σₖ ψₖ(x) Ḃᵏ`, seeded Brownian paths and the
//! stochastic convolution `z` solving `∂ₜz = Δz + ξ`, `z(0) = 0`.
//!
//! A [`NoisePath`] is a pure function of `(seed, dt, n_steps, n_modes)`: mode
//! `k` draws from its own ChaCha stream, so paths are reproducible bit for
//! bit and independent of how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, ImplicitDiffusion};

/// `ψₖ(x) = amplitude·sin(index·πx/L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineMode {
    pub index: u32,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeProfile {
    Constant,
    Cosine { frequency: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpaceProfile {
    Zero,
    Constant,
    Sine { index: u32 },
}

/// Deterministic forcing `ψ₀(t, x) = amplitude·T(t)·S(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    pub amplitude: f64,
    pub time: TimeProfile,
    pub space: SpaceProfile,
}

impl Forcing {
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            time: TimeProfile::Constant,
            space: SpaceProfile::Zero,
        }
    }

    pub fn sine(amplitude: f64, index: u32) -> Self {
        Self {
            amplitude,
            time: TimeProfile::Constant,
            space: SpaceProfile::Sine { index },
        }
    }

    pub fn time_factor(&self, t: f64) -> f64 {
        match self.time {
            TimeProfile::Constant => 1.0,
            TimeProfile::Cosine { frequency } => (2.0 * PI * frequency * t).cos(),
        }
    }

    pub fn space_factor(&self, x: f64, length: f64) -> f64 {
        match self.space {
            SpaceProfile::Zero => 0.0,
            SpaceProfile::Constant => 1.0,
            SpaceProfile::Sine { index } => (index as f64 * PI * x / length).sin(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || matches!(self.space, SpaceProfile::Zero)
    }

    /// Upper bound on `sup_{t,x} |ψ₀(t, x)|`.
    pub fn sup_bound(&self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.amplitude.abs()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    pub modes: Vec<SineMode>,
    pub forcing: Forcing,
    /// Declared Hölder regularity `α₀ ∈ (0, 1)` of the spatial modes.
    pub hoelder_exponent: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            modes: Vec::new(),
            forcing: Forcing::none(),
            hoelder_exponent: 0.5,
        }
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = forcing;
        self
    }

    pub fn with_mode(mut self, index: u32, amplitude: f64) -> Self {
        self.modes.push(SineMode { index, amplitude });
        self
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.forcing.amplitude.is_finite() {
            return Err(Error::InvalidArgument("forcing amplitude must be finite".into()));
        }
        if let TimeProfile::Cosine { frequency } = self.forcing.time {
            if !frequency.is_finite() {
                return Err(Error::InvalidArgument("forcing frequency must be finite".into()));
            }
        }
        for m in &self.modes {
            if m.index == 0 || !m.amplitude.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "noise mode needs index ≥ 1 and finite amplitude, got ({}, {})",
                    m.index, m.amplitude
                )));
            }
        }
        if !(self.hoelder_exponent > 0.0 && self.hoelder_exponent < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hölder exponent must lie in (0, 1), got {}",
                self.hoelder_exponent
            )));
        }
        Ok(())
    }

    pub fn mode_fields(&self, grid: &Grid) -> Vec<Field> {
        self.modes
            .iter()
            .map(|m| {
                let k = m.index as f64;
                let len = grid.length();
                Field::from_fn(*grid, |x| m.amplitude * (k * PI * x / len).sin())
            })
            .collect()
    }

    pub fn psi0(&self, t: f64, x: f64, length: f64) -> f64 {
        self.forcing.amplitude * self.forcing.time_factor(t) * self.forcing.space_factor(x, length)
    }
}

/// Seeded Brownian increments `ΔBᵏⱼ ~ N(0, dt)`, row-major `[step][mode]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    seed: u64,
    dt: f64,
    n_steps: usize,
    n_modes: usize,
    increments: Vec<f64>,
}

impl NoisePath {
    pub fn sample(spec: &NoiseSpec, seed: u64, dt: f64, n_steps: usize) -> Result<Self> {
        Self::sample_modes(spec.n_modes(), seed, dt, n_steps)
    }

    pub fn sample_modes(n_modes: usize, seed: u64, dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
        }
        let sd = dt.sqrt();
        let mut increments = vec![0.0; n_steps * n_modes];
        for k in 0..n_modes {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64 + 1);
            for j in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                increments[j * n_modes + k] = sd * z;
            }
        }
        Ok(Self {
            seed,
            dt,
            n_steps,
            n_modes,
            increments,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Increments of all modes at step `j`.
    pub fn step(&self, j: usize) -> &[f64] {
        &self.increments[j * self.n_modes..(j + 1) * self.n_modes]
    }

    pub fn mode_increments(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_steps).map(move |j| self.increments[j * self.n_modes + k])
    }
}

/// Precomputed spatial profiles turning a [`NoisePath`] into per-step
/// forcing increments `dt·ψ₀(tⱼ, ·) + Σₖ ψₖ ΔBᵏⱼ`.
#[derive(Debug, Clone)]
pub struct ForcingSampler {
    spec: NoiseSpec,
    grid: Grid,
    modes: Vec<Field>,
    psi0_space: Vec<f64>,
}

impl ForcingSampler {
    pub fn new(spec: &NoiseSpec, grid: &Grid) -> Self {
        let len = grid.length();
        let psi0_space = grid
            .centers()
            .iter()
            .map(|&x| spec.forcing.space_factor(x, len))
            .collect();
        Self {
            spec: spec.clone(),
            grid: *grid,
            modes: spec.mode_fields(grid),
            psi0_space,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Forcing increment over `[t, t + dt]` with Brownian increments `db`.
    pub fn increment_into(&self, t: f64, dt: f64, db: &[f64], out: &mut [f64]) {
        let c0 = if self.spec.forcing.is_zero() {
            0.0
        } else {
            dt * self.spec.forcing.amplitude * self.spec.forcing.time_factor(t)
        };
        for (o, s) in out.iter_mut().zip(&self.psi0_space) {
            *o = c0 * s;
        }
        for (m, &b) in self.modes.iter().zip(db) {
            for (o, p) in out.iter_mut().zip(m.values()) {
                *o += p * b;
            }
        }
    }

    pub fn increment(&self, path: &NoisePath, j: usize) -> Field {
        let mut out = vec![0.0; self.grid.n_cells()];
        self.increment_into(j as f64 * path.dt(), path.dt(), path.step(j), &mut out);
        Field::new(self.grid, out).expect("finite forcing")
    }
}

/// Sup statistics of `z` over one time window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStat {
    pub start: f64,
    pub sup_c0: f64,
    pub sup_c1: f64,
}

#[derive(Debug, Clone)]
pub struct ZTrajectory {
    pub dt: f64,
    /// `‖z(tⱼ)‖∞` for every step, `j = 0..=n_steps`.
    pub sup_norm: Vec<f64>,
    /// Largest one-sided difference quotient of `z(tⱼ)`, boundary faces included.
    pub c1_norm: Vec<f64>,
    pub windows: Vec<WindowStat>,
    /// `z` at every `stride`-th step (always including step 0).
    pub fields: Vec<Field>,
    pub stride: usize,
}

impl ZTrajectory {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.sup_norm.len()).map(move |j| j as f64 * self.dt)
    }

    /// `sup_{t ≤ horizon} ‖z_t‖∞`.
    pub fn sup_up_to(&self, horizon: f64) -> f64 {
        self.take_up_to(&self.sup_norm, horizon)
    }

    /// `sup_{t ≤ horizon} ‖∂ₓz_t‖∞`.
    pub fn grad_sup_up_to(&self, horizon: f64) -> f64 {
        self.take_up_to(&self.c1_norm, horizon)
    }

    fn take_up_to(&self, v: &[f64], horizon: f64) -> f64 {
        let last = ((horizon / self.dt).round() as usize).min(v.len() - 1);
        v[..=last].iter().copied().fold(0.0, f64::max)
    }

    /// Stored field at step `j`, if `j` is on the stride.
    pub fn field_at_step(&self, j: usize) -> Option<&Field> {
        if j.is_multiple_of(self.stride) {
            self.fields.get(j / self.stride)
        } else {
            None
        }
    }
}

pub fn c1_norm(z: &Field) -> f64 {
    let v = z.values();
    let n = v.len();
    let dx = z.grid().dx();
    let mut m = (v[0].abs() / (0.5 * dx)).max(v[n - 1].abs() / (0.5 * dx));
    for w in v.windows(2) {
        m = m.max((w[1] - w[0]).abs() / dx);
    }
    m
}

/// Evolves `z` by Lie splitting: add the forcing increment, then one
/// implicit heat step. Window statistics use windows of length `window`.
pub fn evolve_z(spec: &NoiseSpec, path: &NoisePath, grid: &Grid, window: f64, stride: usize) -> Result<ZTrajectory> {
    if path.n_modes() != spec.n_modes() {
        return Err(Error::LengthMismatch {
            expected: spec.n_modes(),
            got: path.n_modes(),
        });
    }
    if !(window > 0.0) || stride == 0 {
        return Err(Error::InvalidArgument("window and stride must be positive".into()));
    }
    let dt = path.dt();
    let sampler = ForcingSampler::new(spec, grid);
    let heat = ImplicitDiffusion::new(*grid, dt)?;
    let mut z = Field::zeros(*grid);
    let mut incr = vec![0.0; grid.n_cells()];
    let mut sup_norm = Vec::with_capacity(path.n_steps() + 1);
    let mut c1 = Vec::with_capacity(path.n_steps() + 1);
    let mut fields = vec![z.clone()];
    sup_norm.push(0.0);
    c1.push(0.0);
    for j in 0..path.n_steps() {
        sampler.increment_into(j as f64 * dt, dt, path.step(j), &mut incr);
        for (zi, f) in z.values_mut().iter_mut().zip(&incr) {
            *zi += f;
        }
        heat.solve_in_place(z.values_mut());
        if !z.is_finite() {
            return Err(Error::NonFinite { step: j + 1 });
        }
        sup_norm.push(z.max_abs());
        c1.push(c1_norm(&z));
        if (j + 1) % stride == 0 {
            fields.push(z.clone());
        }
    }
    let windows = window_stats(&sup_norm, &c1, dt, window);
    Ok(ZTrajectory {
        dt,
        sup_norm,
        c1_norm: c1,
        windows,
        fields,
        stride,
    })
}

fn window_stats(c0: &[f64], c1: &[f64], dt: f64, window: f64) -> Vec<WindowStat> {
    let per = ((window / dt).round() as usize).max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + per < c0.len() {
        let end = start + per;
        out.push(WindowStat {
            start: start as f64 * dt,
            sup_c0: c0[start..=end].iter().copied().fold(0.0, f64::max),
            sup_c1: c1[start..=end].iter().copied().fold(0.0, f64::max),
        });
        start = end;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZRegularity {
    pub max_c0: f64,
    pub max_c1: f64,
    pub mean_window_c0: f64,
    pub mean_window_c1: f64,
    pub second_moment_c0: f64,
    pub n_windows: usize,
    /// Running maximum grows faster than linearly in `log t`.
    pub growth_flag: bool,
}

/// Summary of the window statistics. Windows cover complete periods only;
/// a trajectory shorter than one window is summarised as a single window.
pub fn z_regularity_stats(traj: &ZTrajectory) -> Result<ZRegularity> {
    if traj.sup_norm.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    let windows: Vec<WindowStat> = if traj.windows.is_empty() {
        vec![WindowStat {
            start: 0.0,
            sup_c0: traj.sup_norm.iter().copied().fold(0.0, f64::max),
            sup_c1: traj.c1_norm.iter().copied().fold(0.0, f64::max),
        }]
    } else {
        traj.windows.clone()
    };
    let c0: Vec<f64> = windows.iter().map(|w| w.sup_c0).collect();
    let c1: Vec<f64> = windows.iter().map(|w| w.sup_c1).collect();
    let growth_flag = running_max_grows_superlog(&windows, traj.dt);
    Ok(ZRegularity {
        max_c0: c0.iter().copied().fold(0.0, f64::max),
        max_c1: c1.iter().copied().fold(0.0, f64::max),
        mean_window_c0: crate::stats::mean(&c0),
        mean_window_c1: crate::stats::mean(&c1),
        second_moment_c0: crate::stats::mean(&c0.iter().map(|v| v * v).collect::<Vec<_>>()),
        n_windows: windows.len(),
        growth_flag,
    })
}

/// Compares the growth of the running max against `log t` over the two
/// halves of the window sequence; flags if the late half grows more than
/// twice as fast per unit `log t` as the early half.
fn running_max_grows_superlog(windows: &[WindowStat], dt: f64) -> bool {
    if windows.len() < 8 {
        return false;
    }
    let width = (windows[1].start - windows[0].start).max(dt);
    let mut running = 0.0_f64;
    let pts: Vec<(f64, f64)> = windows
        .iter()
        .map(|w| {
            running = running.max(w.sup_c0);
            ((w.start + width).ln(), running)
        })
        .collect();
    let half = pts.len() / 2;
    let rate = |s: &[(f64, f64)]| {
        let (a, b) = (s[0], s[s.len() - 1]);
        if b.0 > a.0 {
            (b.1 - a.1) / (b.0 - a.0)
        } else {
            0.0
        }
    };
    let early = rate(&pts[..half]);
    let late = rate(&pts[half..]);
    let scale = running.max(f64::MIN_POSITIVE);
    late > 2.0 * early + 1e-9 * scale
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    #[test]
    fn degenerate_noise_has_empty_increments() {
        let p = NoisePath::sample(&NoiseSpec::none(), 7, 0.01, 100).unwrap();
        assert_eq!(p.n_modes(), 0);
        assert!(p.step(5).is_empty());
    }

    #[test]
    fn same_seed_same_path_and_different_seeds_differ() {
        let spec = NoiseSpec::none().with_mode(1, 1.0).with_mode(2, 0.5);
        let a = NoisePath::sample(&spec, 42, 1e-3, 500).unwrap();
        let b = NoisePath::sample(&spec, 42, 1e-3, 500).unwrap();
        assert_eq!(a, b);
        let c = NoisePath::sample(&spec, 43, 1e-3, 500).unwrap();
        assert_ne!(a.increments, c.increments);
        // modes use distinct streams
        let m0: Vec<f64> = a.mode_increments(0).collect();
        let m1: Vec<f64> = a.mode_increments(1).collect();
        assert_ne!(m0, m1);
    }

    #[test]
    fn increment_variance_is_dt() {
        let spec = NoiseSpec::none().with_mode(1, 1.0).with_mode(3, 1.0);
        let dt = 2e-3;
        let p = NoisePath::sample(&spec, 9, dt, 20_000).unwrap();
        for k in 0..2 {
            let x: Vec<f64> = p.mode_increments(k).collect();
            let var = crate::stats::std_dev(&x).powi(2);
            assert!(var >= 0.8 * dt && var <= 1.2 * dt, "variance {var}");
        }
    }

    #[test]
    fn zero_noise_gives_zero_z() {
        let spec = NoiseSpec::none();
        let p = NoisePath::sample(&spec, 1, 0.01, 200).unwrap();
        let z = evolve_z(&spec, &p, &unit(16), 1.0, 1).unwrap();
        assert!(z.sup_norm.iter().all(|&v| v == 0.0));
        let s = z_regularity_stats(&z).unwrap();
        assert_eq!(s.max_c0, 0.0);
        assert_eq!(s.max_c1, 0.0);
        assert_eq!(s.mean_window_c0, 0.0);
    }

    #[test]
    fn constant_sine_forcing_relaxes_to_stationary_profile() {
        let spec = NoiseSpec::none().with_forcing(Forcing::sine(1.0, 1));
        let dt = 1e-3;
        let p = NoisePath::sample(&spec, 0, dt, 2000).unwrap();
        let g = unit(256);
        let z = evolve_z(&spec, &p, &g, 1.0, 2000).unwrap();
        let z2 = z.field_at_step(2000).unwrap();
        let pi2 = PI * PI;
        let amp = (1.0 - (-pi2 * 2.0).exp()) / pi2;
        for (zi, x) in z2.values().iter().zip(g.centers()) {
            let exact = amp * (PI * x).sin();
            assert!((zi - exact).abs() <= 0.02 * amp, "{zi} vs {exact}");
        }
        // gradient of sin(πx)/π² at the boundary is 1/π
        let s = z_regularity_stats(&z).unwrap();
        assert!((s.max_c1 - 1.0 / PI).abs() <= 0.05 / PI, "c1 {}", s.max_c1);
    }

    #[test]
    fn z_is_linear_in_forcing() {
        let g = unit(32);
        let base = NoiseSpec::none().with_forcing(Forcing {
            amplitude: 1.0,
            time: TimeProfile::Cosine { frequency: 0.7 },
            space: SpaceProfile::Sine { index: 2 },
        });
        let p = NoisePath::sample(&base, 0, 1e-3, 800).unwrap();
        let z1 = evolve_z(&base, &p, &g, 1.0, 100).unwrap();
        let c = -3.25;
        let scaled = base.clone().with_forcing(Forcing {
            amplitude: c,
            ..base.forcing
        });
        let zc = evolve_z(&scaled, &p, &g, 1.0, 100).unwrap();
        for (a, b) in z1.fields.iter().zip(&zc.fields) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((c * x - y).abs() <= 1e-12 * (c * x).abs().max(1e-300));
            }
        }
    }

    #[test]
    fn z_mean_is_zero_without_deterministic_forcing() {
        let spec = NoiseSpec::none().with_mode(1, 1.0);
        let g = unit(16);
        let x0 = g.n_cells() / 3;
        let samples: Vec<f64> = (0..200u64)
            .map(|s| {
                let p = NoisePath::sample(&spec, s, 1e-2, 100).unwrap();
                let z = evolve_z(&spec, &p, &g, 1.0, 100).unwrap();
                z.fields.last().unwrap().values()[x0]
            })
            .collect();
        let m = crate::stats::mean(&samples);
        let se = crate::stats::std_dev(&samples) / (samples.len() as f64).sqrt();
        assert!(m.abs() <= 3.0 * se, "mean {m}, se {se}");
    }

    #[test]
    fn stochastic_z_window_stats_are_tame() {
        let spec = NoiseSpec::none().with_mode(1, 1.0);
        let g = unit(32);
        let mut sups = Vec::new();
        let mut window_sups = Vec::new();
        for s in 0..100u64 {
            let p = NoisePath::sample(&spec, s, 1e-2, 500).unwrap();
            let z = evolve_z(&spec, &p, &g, 1.0, 500).unwrap();
            let st = z_regularity_stats(&z).unwrap();
            assert!(st.max_c0.is_finite() && st.max_c1.is_finite());
            sups.push(st.max_c0);
            window_sups.extend(z.windows.iter().map(|w| w.sup_c0));
        }
        let m = crate::stats::mean(&sups);
        assert!(m.is_finite() && m > 0.0);
        let med = crate::stats::quantile(&window_sups, 0.5);
        assert!(window_sups.iter().all(|&w| w <= 10.0 * med));
    }

    #[test]
    fn boundary_cells_bounded_by_sup() {
        let spec = NoiseSpec::none().with_mode(2, 3.0).with_forcing(Forcing::sine(2.0, 1));
        let g = unit(24);
        let p = NoisePath::sample(&spec, 5, 1e-3, 300).unwrap();
        let z = evolve_z(&spec, &p, &g, 1.0, 1).unwrap();
        for f in &z.fields {
            let s = f.max_abs();
            assert!(f.values()[0].abs() <= s && f.values()[g.n_cells() - 1].abs() <= s);
        }
        assert_eq!(z.fields[0].max_abs(), 0.0);
    }

    #[test]
    fn validate_rejects_bad_specs() {
        assert!(NoiseSpec::none().with_mode(0, 1.0).validate().is_err());
        assert!(NoiseSpec::none().with_mode(1, f64::NAN).validate().is_err());
        let mut s = NoiseSpec::none();
        s.hoelder_exponent = 1.5;
        assert!(s.validate().is_err());
        assert!(NoiseSpec::none().with_mode(3, 0.2).validate().is_ok());
    }
}
