//! Cross-module properties on randomly drawn data.

use proptest::prelude::*;
use synclaw_core::exit::{estimate_p_inf_with, DriftField, GirsanovBound};
use synclaw_core::grid::lp_norm;
use synclaw_core::noise::{evolve_z, Forcing};
use synclaw_core::solver::{evolve, supersolution_params, SolverConfig};
use synclaw_core::synchro::{couple_evolve, kernel_mass_loss_frozen, FrozenLinearEvolution};
use synclaw_core::{Field, FluxModel, Grid, NoisePath, NoiseSpec};

const MODELS: [&str; 4] = ["burgers", "cubic", "sine", "zero"];

fn grid() -> Grid {
    Grid::new(1.0, 24).unwrap()
}

fn arb_values(n: usize, amp: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-amp..amp, n)
}

fn noisy() -> NoiseSpec {
    NoiseSpec::none()
        .with_mode(1, 1.0)
        .with_mode(2, 0.5)
        .with_forcing(Forcing::sine(1.0, 1))
}

fn pair_run(model: &FluxModel, u: Vec<f64>, v: Vec<f64>, seed: u64) -> synclaw_core::synchro::PairTrajectory {
    let g = grid();
    let spec = noisy();
    let cfg = SolverConfig::new(2e-3, 0.2).with_stride(5);
    let path = NoisePath::sample(&spec, seed, cfg.dt, cfg.n_steps()).unwrap();
    couple_evolve(
        &Field::new(g, u).unwrap(),
        &Field::new(g, v).unwrap(),
        model,
        &spec,
        &path,
        &cfg,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn l1_distance_never_grows(
        m in 0usize..MODELS.len(),
        u in arb_values(24, 4.0),
        v in arb_values(24, 4.0),
        seed in any::<u64>(),
    ) {
        let pair = pair_run(&FluxModel::builtin(MODELS[m], &[]).unwrap(), u, v, seed);
        let scale = pair.w_l1[0];
        for w in pair.w_l1.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-10 * scale, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn ordered_data_stay_ordered(
        u in arb_values(24, 3.0),
        gap in prop::collection::vec(0.0f64..2.0, 24),
        seed in any::<u64>(),
    ) {
        let v: Vec<f64> = u.iter().zip(&gap).map(|(a, d)| a - d).collect();
        let pair = pair_run(&FluxModel::burgers(), u, v, seed);
        for (a, b) in pair.u_states.iter().zip(&pair.v_states) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!(x >= y, "order lost: {x} < {y}");
            }
        }
        // w = u − v ≥ 0 only loses mass through the boundary
        prop_assert!(pair.boundary_diss.iter().all(|&d| d <= 1e-10));
    }

    #[test]
    fn kernel_columns_are_sub_probability(
        speeds in prop::collection::vec(arb_values(24, 3.0), 1..4),
        steps in 5usize..40,
    ) {
        let g = grid();
        let evo = FrozenLinearEvolution::from_cell_speeds(&g, 1e-3, steps, 0.0, |j| speeds[j % speeds.len()].clone()).unwrap();
        let k = kernel_mass_loss_frozen(&evo).unwrap();
        prop_assert!((0.0..=1.0).contains(&k.p_hat));
        prop_assert!(k.max_intermediate_mass <= 1.0 + 1e-10);
        prop_assert!(k.min_value >= -1e-10);
        prop_assert!(k.masses.iter().all(|&m| (-1e-12..=1.0 + 1e-10).contains(&m)));
    }

    #[test]
    fn girsanov_bound_is_monotone(h1 in 0.01f64..1.0, h2 in 0.01f64..1.0, b1 in 0.0f64..10.0, b2 in 0.0f64..10.0) {
        let g = GirsanovBound::for_interval(1.0);
        let (hl, hh) = if h1 <= h2 { (h1, h2) } else { (h2, h1) };
        let (bl, bh) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        prop_assert!(g.bound(hl, bl).unwrap() <= g.bound(hh, bl).unwrap());
        prop_assert!(g.bound(hl, bh).unwrap() <= g.bound(hl, bl).unwrap());
        let v = g.bound(hh, bl).unwrap();
        prop_assert!((0.0..1.0).contains(&v));
    }

    #[test]
    fn exit_estimates_are_probabilities(b in -3.0f64..3.0, h in 0.02f64..0.5, seed in any::<u64>()) {
        let drift = DriftField::constant(1.0, 16, b);
        let n = 400;
        let e = estimate_p_inf_with(&drift, h, 4, n, h / 50.0, seed).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.p_hat));
        prop_assert!(e.stderr <= 0.5 / (n as f64).sqrt() + 1e-15);
        prop_assert!(e.fractions.iter().all(|f| (0.0..=1.0).contains(f)));
    }

    #[test]
    fn l1_bounded_by_lp(values in arb_values(24, 10.0), p in 1.0f64..8.0, len in 0.5f64..3.0) {
        let g = Grid::new(len, 24).unwrap();
        let f = Field::new(g, values).unwrap();
        let l1 = lp_norm(&f, 1.0).unwrap();
        let lp = lp_norm(&f, p).unwrap();
        prop_assert!(l1 <= len.powf(1.0 - 1.0 / p) * lp * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn stochastic_convolution_is_linear_in_the_forcing(c in -5.0f64..5.0, k in 1u32..4) {
        let g = grid();
        let base = NoiseSpec::none().with_forcing(Forcing::sine(1.0, k));
        let scaled = NoiseSpec::none().with_forcing(Forcing::sine(c, k));
        let path = NoisePath::sample(&base, 0, 1e-3, 200).unwrap();
        let z1 = evolve_z(&base, &path, &g, 0.1, 1).unwrap();
        let zc = evolve_z(&scaled, &path, &g, 0.1, 1).unwrap();
        for (a, b) in z1.fields.iter().zip(&zc.fields) {
            for (x, y) in a.values().iter().zip(b.values()) {
                prop_assert!((c * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn supersolution_constants(alpha in 0.1f64..5.0, beta in 0.0f64..5.0, t in 0.5f64..4.0, z in 0.0f64..3.0, dz in 0.0f64..10.0) {
        let model = FluxModel::coercive_quadratic(alpha, beta).unwrap();
        let g = grid();
        let s = supersolution_params(&model, t, z, dz, &g).unwrap();
        prop_assert!(s.b >= 1.0);
        let a = s.b * (1.0 + g.domain_span() + t * z + t * beta / alpha);
        prop_assert_eq!(s.a, a);
    }
}

#[test]
fn shared_path_regenerates_bit_exactly() {
    let spec = noisy();
    let a = NoisePath::sample(&spec, 42, 1e-3, 500).unwrap();
    let b = NoisePath::sample(&spec, 42, 1e-3, 500).unwrap();
    for j in 0..500 {
        assert_eq!(a.step(j), b.step(j));
    }
    let c = NoisePath::sample(&spec, 43, 1e-3, 500).unwrap();
    assert_ne!(a.step(0), c.step(0));
}

#[test]
fn identical_starts_on_one_path_agree_with_single_runs() {
    let g = grid();
    let spec = noisy();
    let cfg = SolverConfig::new(2e-3, 0.5).with_stride(1);
    let path = NoisePath::sample(&spec, 9, cfg.dt, cfg.n_steps()).unwrap();
    let u0 = Field::from_fn(g, |x| 3.0 * (std::f64::consts::PI * x).sin());
    let v0 = Field::from_fn(g, |x| -2.0 * x * (1.0 - x));
    let model = FluxModel::burgers();
    let pair = couple_evolve(&u0, &v0, &model, &spec, &path, &cfg).unwrap();
    let u = evolve(&u0, &model, &spec, &path, &cfg).unwrap();
    let v = evolve(&v0, &model, &spec, &path, &cfg).unwrap();
    assert_eq!(pair.u_states.last().unwrap(), u.states.last().unwrap());
    assert_eq!(pair.v_states.last().unwrap(), v.states.last().unwrap());
}

#[test]
fn kernel_and_monte_carlo_agree_for_constant_drift() {
    let g = Grid::new(1.0, 64).unwrap();
    for &(b, h) in &[(0.0, 0.1), (2.0, 0.1), (-1.0, 0.3)] {
        let evo =
            FrozenLinearEvolution::from_cell_speeds(&g, 1e-3, (h / 1e-3_f64).round() as usize, b, |_| vec![b; 64])
                .unwrap();
        let k = kernel_mass_loss_frozen(&evo).unwrap();
        let e = estimate_p_inf_with(&DriftField::constant(1.0, 64, b), h, 31, 4000, h / 200.0, 5).unwrap();
        let allowance = 3.0 * (e.stderr + 10.0 * g.dx());
        assert!(
            (k.p_hat - e.p_hat).abs() <= allowance,
            "b = {b}, h = {h}: kernel {} vs mc {} (allowance {allowance})",
            k.p_hat,
            e.p_hat
        );
    }
}
