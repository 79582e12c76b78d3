//! Numerical laboratory for viscous stochastic scalar conservation laws
//!
//! ```text
//! ∂ₜu + ∂ₓA(u) − ∂ₓₓu = ψ₀(t, x) + Σₖ ψₖ(x) Ḃᵏ,    u = 0 on ∂(0, L)
//! ```
//!
//! The crate evolves single solutions and pairs of solutions driven by one
//! shared noise path, and provides the diagnostics used to study their
//! synchronisation: discrete L¹ contraction, explicit super-solutions,
//! boundary dissipation estimated through the linearised kernel and through
//! Monte Carlo exit times, Lᵖ drift fits and excursion statistics.
//!
//! Module map:
//!
//! - [`grid`]: cell-centered mesh, fields, implicit diffusion and boundary operators
//! - [`flux`]: flux models, secant slope, coercivity and growth checks
//! - [`noise`]: noise specification, seeded Brownian paths, stochastic convolution
//! - [`solver`]: monotone IMEX time stepping, super-solutions, Lᵖ drift audit
//! - [`synchro`]: coupled evolution, Lyapunov fit, kernel mass loss
//! - [`exit`]: exit-time Monte Carlo and the closed-form change-of-measure bound
//! - [`excursions`]: center sets, stopping times, center-time rate, moment audit
//! - [`snapshot`]: binary state snapshots

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod excursions;
pub mod exit;
pub mod flux;
pub mod grid;
pub mod noise;
pub mod snapshot;
pub mod solver;
pub mod stats;
pub mod synchro;

pub use error::{Error, Result};
pub use flux::{FluxKind, FluxModel};
pub use grid::{Field, Grid};
pub use noise::{NoisePath, NoiseSpec};
