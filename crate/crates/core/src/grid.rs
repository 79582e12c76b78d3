//! Uniform cell-centered mesh on `(0, L)` with homogeneous Dirichlet boundary.
//!
//! The boundary value sits on the outer faces `x = 0` and `x = L`. Second
//! differences reach it through an antisymmetric ghost cell (`u₋₁ = −u₀`),
//! so sine modes `sin(kπxᵢ/L)` sampled at the cell centers are exact
//! eigenvectors of the discrete Laplacian and the discrete divergence theorem
//! holds to rounding.

use crate::error::{Error, Result};

/// Cell-centered mesh. Immutable and `Copy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    length: f64,
    n_cells: usize,
    dx: f64,
}

impl Grid {
    pub fn new(length: f64, n_cells: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "domain length must be positive and finite, got {length}"
            )));
        }
        if n_cells < 3 {
            return Err(Error::InvalidGrid(format!("need at least 3 cells, got {n_cells}")));
        }
        Ok(Self {
            length,
            n_cells,
            dx: length / n_cells as f64,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Midpoint of cell `i`, `(i + ½)·dx`.
    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// `D = max Σᵢ|xᵢ|` over the cell centers; in 1D the last center.
    pub fn domain_span(&self) -> f64 {
        self.center(self.n_cells - 1)
    }

    /// Index of the cell containing `x`, clamped to the mesh.
    pub fn cell_of(&self, x: f64) -> usize {
        let i = (x / self.dx).floor();
        if i <= 0.0 {
            0
        } else {
            (i as usize).min(self.n_cells - 1)
        }
    }
}

/// Cell averages on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::LengthMismatch {
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value {} in cell {i}",
                values[i]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_cells()],
        }
    }

    /// Samples `f` at the cell centers.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: (0..grid.n_cells()).map(|i| f(grid.center(i))).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `dx·Σᵢ fᵢ`.
    pub fn integral(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    /// Pointwise `self − other`.
    pub fn sub(&self, other: &Field) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn positive_part(&self) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| v.max(0.0)).collect(),
        }
    }

    pub fn negative_part(&self) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| (-v).max(0.0)).collect(),
        }
    }
}

/// Factorised `(I − dt·Δ_h)` for repeated solves with a fixed step.
///
/// The matrix is a symmetric M-matrix with constant off-diagonal `−r`,
/// `r = dt/dx²`, interior diagonal `1 + 2r` and `1 + 3r` in the two
/// boundary cells. The Thomas sweep coefficients are computed once.
#[derive(Debug, Clone)]
pub struct ImplicitDiffusion {
    grid: Grid,
    dt: f64,
    r: f64,
    upper: Vec<f64>,
    inv_pivot: Vec<f64>,
}

impl ImplicitDiffusion {
    pub fn new(grid: Grid, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "diffusion step must be positive, got {dt}"
            )));
        }
        let n = grid.n_cells();
        let r = dt / (grid.dx() * grid.dx());
        let diag = |i: usize| {
            if i == 0 || i == n - 1 {
                1.0 + 3.0 * r
            } else {
                1.0 + 2.0 * r
            }
        };
        let mut upper = vec![0.0; n];
        let mut inv_pivot = vec![0.0; n];
        let mut pivot = diag(0);
        inv_pivot[0] = 1.0 / pivot;
        upper[0] = -r / pivot;
        for i in 1..n {
            pivot = diag(i) + r * upper[i - 1];
            inv_pivot[i] = 1.0 / pivot;
            upper[i] = -r / pivot;
        }
        Ok(Self {
            grid,
            dt,
            r,
            upper,
            inv_pivot,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Overwrites `rhs` with the solution `g` of `(I − dt·Δ_h)g = rhs`.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        debug_assert_eq!(n, self.grid.n_cells());
        rhs[0] *= self.inv_pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] + self.r * rhs[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.upper[i] * rhs[i + 1];
        }
    }

    pub fn apply(&self, f: &Field) -> Field {
        let mut values = f.values.clone();
        self.solve_in_place(&mut values);
        Field { grid: f.grid, values }
    }
}

/// One backward-Euler heat step: solves `(I − dt·Δ_h)g = f`.
pub fn implicit_diffusion_step(f: &Field, dt: f64) -> Result<Field> {
    Ok(ImplicitDiffusion::new(f.grid, dt)?.apply(f))
}

/// Discrete Dirichlet Laplacian `Δ_h f`.
pub fn laplacian(f: &Field) -> Field {
    let n = f.len();
    let inv_dx2 = 1.0 / (f.grid.dx() * f.grid.dx());
    let v = &f.values;
    let values = (0..n)
        .map(|i| {
            let left = if i == 0 { -v[0] } else { v[i - 1] };
            let right = if i == n - 1 { -v[n - 1] } else { v[i + 1] };
            (left - 2.0 * v[i] + right) * inv_dx2
        })
        .collect();
    Field { grid: f.grid, values }
}

/// Conservative divergence of a face flux: cell `i` gets
/// `(F[i+1] − F[i])/dx`. `face_flux` has `n_cells + 1` entries.
pub fn divergence_of_face_flux(face_flux: &[f64], grid: &Grid) -> Result<Field> {
    let n = grid.n_cells();
    if face_flux.len() != n + 1 {
        return Err(Error::LengthMismatch {
            expected: n + 1,
            got: face_flux.len(),
        });
    }
    let inv_dx = 1.0 / grid.dx();
    let values = face_flux.windows(2).map(|w| (w[1] - w[0]) * inv_dx).collect();
    Field::new(*grid, values)
}

/// `∫_{∂𝒟} 𝐧·∇w dΣ` by one-sided differences against the zero boundary
/// value on each outer face, half a cell from the adjacent center.
pub fn boundary_normal_gradient(w: &Field) -> f64 {
    let n = w.len();
    let two_over_dx = 2.0 / w.grid.dx();
    -w.values[0] * two_over_dx - w.values[n - 1] * two_over_dx
}

/// `dx·Σ|fᵢ|ᵖ`, the p-th power of the discrete Lᵖ norm.
pub fn lp_norm_pow(f: &Field, p: f64) -> f64 {
    let dx = f.grid.dx();
    if p == 2.0 {
        dx * f.values.iter().map(|v| v * v).sum::<f64>()
    } else if p == 1.0 {
        dx * f.values.iter().map(|v| v.abs()).sum::<f64>()
    } else {
        dx * f.values.iter().map(|v| v.abs().powf(p)).sum::<f64>()
    }
}

/// Discrete Lᵖ norm; `p = f64::INFINITY` gives the max norm.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::InvalidArgument(format!("norm index must be ≥ 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    let s = lp_norm_pow(f, p);
    Ok(if p == 1.0 { s } else { s.powf(1.0 / p) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn unit(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    #[test]
    fn four_cell_grid() {
        let g = unit(4);
        assert_eq!(g.dx(), 0.25);
        assert_eq!(g.centers(), vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(g.domain_span(), 0.875);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid::new(2.0, 2).is_err());
        assert!(Grid::new(0.0, 8).is_err());
        assert!(Grid::new(-1.0, 8).is_err());
        assert!(Grid::new(f64::NAN, 8).is_err());
    }

    #[test]
    fn field_rejects_wrong_length_and_nan() {
        let g = unit(4);
        assert!(Field::new(g, vec![0.0; 3]).is_err());
        assert!(Field::new(g, vec![0.0, f64::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn diffusion_of_zero_is_zero() {
        let g = unit(16);
        let out = implicit_diffusion_step(&Field::zeros(g), 0.1).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_mode_is_eigenvector_of_implicit_step() {
        for &(len, n, dt) in &[(1.0, 32, 1e-3), (2.0, 50, 0.05), (1.0, 7, 0.3)] {
            let g = Grid::new(len, n).unwrap();
            let f = Field::from_fn(g, |x| (PI * x / len).sin());
            let out = implicit_diffusion_step(&f, dt).unwrap();
            let dx = g.dx();
            let lambda = 2.0 / (dx * dx) * (1.0 - (PI * dx / len).cos());
            for (a, b) in out.values().iter().zip(f.values()) {
                assert!((a - b / (1.0 + dt * lambda)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn implicit_step_residual_is_tiny() {
        let g = unit(64);
        let f = Field::from_fn(g, |x| (7.0 * x).sin() + x * x - 0.3);
        let dt = 0.02;
        let out = implicit_diffusion_step(&f, dt).unwrap();
        let lap = laplacian(&out);
        let res = out
            .values()
            .iter()
            .zip(lap.values())
            .zip(f.values())
            .map(|((g, l), f)| (g - dt * l - f).abs())
            .fold(0.0, f64::max);
        assert!(res <= 1e-12 * f.max_abs(), "residual {res}");
    }

    #[test]
    fn divergence_examples() {
        let g = unit(4);
        let d = divergence_of_face_flux(&[3.0; 5], &g).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));

        let d = divergence_of_face_flux(&[0.0, 1.0, 0.0, 0.0, 0.0], &g).unwrap();
        assert_eq!(d.integral(), 0.0);

        let flux: Vec<f64> = (0..5).map(|i| i as f64 * g.dx()).collect();
        let d = divergence_of_face_flux(&flux, &g).unwrap();
        assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        assert!(divergence_of_face_flux(&[0.0; 4], &g).is_err());
    }

    #[test]
    fn boundary_gradient_of_sine_converges_to_minus_two_pi() {
        assert_eq!(boundary_normal_gradient(&Field::zeros(unit(8))), 0.0);
        let mut prev_err = f64::INFINITY;
        for n in [16, 32, 64, 128, 256, 512] {
            let w = Field::from_fn(unit(n), |x| (PI * x).sin());
            let err = (boundary_normal_gradient(&w) + 2.0 * PI).abs();
            assert!(err < prev_err);
            prev_err = err;
        }
        assert!(prev_err < 1e-4);
    }

    #[test]
    fn lp_norm_examples() {
        let g = unit(10);
        let ones = Field::from_fn(g, |_| 1.0);
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            assert!((lp_norm(&ones, p).unwrap() - 1.0).abs() < 1e-14);
        }
        let twos = Field::from_fn(g, |_| 2.0);
        assert!((lp_norm(&twos, 2.0).unwrap() - 2.0).abs() < 1e-14);
        let half = Field::from_fn(g, |x| if x < 0.5 { 1.0 } else { 0.0 });
        assert!((lp_norm(&half, 1.0).unwrap() - 0.5).abs() < 1e-14);
        assert!(lp_norm(&half, 0.5).is_err());
    }

    fn arb_field() -> impl Strategy<Value = Field> {
        (3usize..40, 0.2f64..5.0).prop_flat_map(|(n, len)| {
            prop::collection::vec(-50.0f64..50.0, n)
                .prop_map(move |v| Field::new(Grid::new(len, n).unwrap(), v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn discrete_divergence_theorem(w in arb_field()) {
            let lhs = laplacian(&w).integral();
            let rhs = boundary_normal_gradient(&w);
            let scale = w.max_abs() / (w.grid().dx() * w.grid().dx()) * w.grid().length();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1e-300));
        }

        #[test]
        fn implicit_step_is_positive_and_max_contractive(w in arb_field(), dt in 1e-5f64..1.0) {
            let out = implicit_diffusion_step(&w, dt).unwrap();
            prop_assert!(out.max_abs() <= w.max_abs() * (1.0 + 1e-14));
            let pos = implicit_diffusion_step(&w.positive_part(), dt).unwrap();
            prop_assert!(pos.min() >= -1e-12);
        }

        #[test]
        fn l1_bounded_by_lp(w in arb_field(), p in 1.0f64..8.0) {
            let len = w.grid().length();
            let l1 = lp_norm(&w, 1.0).unwrap();
            let lp = lp_norm(&w, p).unwrap();
            prop_assert!(l1 <= len.powf(1.0 - 1.0 / p) * lp * (1.0 + 1e-12) + 1e-300);
        }
    }
}
