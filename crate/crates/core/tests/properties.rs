//! Randomized invariants of the grid operators, couplings, stationary solver and stability constants.

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::linalg::{max_abs, Stencil};
use mfglab::operators::{apply_a, apply_bbstar, laplacian};
use mfglab::stability::{analyze, eta_form, poincare_constant, principal_eigenpair, solution_from_density, EtaForm};
use mfglab::stationary::{solve_stationary_ergodic, static_energy, StationaryOptions};
use mfglab::{FacetField, PeriodicGrid, ScalarField};
use proptest::prelude::*;

fn field(grid: PeriodicGrid, values: &[f64]) -> ScalarField {
    ScalarField::new(grid, values[..grid.cell_count()].to_vec()).unwrap()
}

fn density(grid: PeriodicGrid, values: &[f64]) -> ScalarField {
    field(grid, values).map(|v| 0.3 + v.abs())
}

fn grids() -> impl Strategy<Value = PeriodicGrid> {
    prop_oneof![
        (8usize..40, 0.5f64..7.0).prop_map(|(n, l)| PeriodicGrid::new(1, n, l).unwrap()),
        (8usize..14).prop_map(|n| PeriodicGrid::new(2, n, 1.0).unwrap()),
    ]
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, 2 * 14 * 14)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn divergence_integrates_to_zero(grid in grids(), v in values()) {
        let faces = FacetField::new(grid, v[..grid.dim() * grid.cell_count()].to_vec()).unwrap();
        let d = faces.div();
        let scale = faces.sup_norm() / grid.h();
        prop_assert!(d.integral().abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn laplacian_and_a_are_in_flux_form(grid in grids(), v in values(), w in values()) {
        let f = field(grid, &v);
        let m = density(grid, &w);
        let scale = f.sup_norm() / (grid.h() * grid.h());
        prop_assert!(laplacian(&f).integral().abs() <= 1e-12 * scale);
        prop_assert!(apply_a(&m, &f).unwrap().integral().abs() <= 1e-12 * scale * m.max() / m.min());
    }

    #[test]
    fn bbstar_factors_through_a(grid in grids(), v in values(), w in values()) {
        let f = field(grid, &v);
        let m = density(grid, &w);
        let lhs = apply_bbstar(&m, &f).unwrap();
        let rhs = apply_a(&m, &m.mul(&f).unwrap()).unwrap();
        // Stencil entries are of order sup m / h^2; rounding is relative to that.
        let scale = m.max() / (grid.h() * grid.h());
        prop_assert!(lhs.add(&rhs).unwrap().sup_norm() <= 1e-12 * f.sup_norm() * scale.max(1.0));
    }

    #[test]
    fn symmetry_of_the_operator_algebra(n in 8usize..=64, w in prop::collection::vec(0.3f64..2.0, 64)) {
        let g = PeriodicGrid::unit(n).unwrap();
        let m = ScalarField::new(g, w[..n].to_vec()).unwrap();
        let a = Stencil::a_operator(&m).unwrap().to_dense();
        let a_star = Stencil::astar_operator(&m).unwrap().to_dense();
        let bb = Stencil::bbstar_operator(&m).unwrap().to_dense();
        let lhs = &bb * &a_star;
        prop_assert!(max_abs(&(&lhs - &a * &bb)) <= 1e-12 * max_abs(&lhs));
        prop_assert!(max_abs(&(&bb - bb.transpose())) <= 1e-12 * max_abs(&bb));
        prop_assert!(max_abs(&(&a_star - a.transpose())) <= 1e-12 * max_abs(&a));
    }

    #[test]
    fn homogeneous_monotone_couplings_give_uniform_states(seed in any::<u64>(), a in 0.2f64..3.0, saturating in any::<bool>()) {
        let base = if saturating {
            Builtin::PotentialPlusSaturating { theta_amp: 0.0, a, b: 0.5 }
        } else {
            Builtin::Linear { a }
        };
        let model = CouplingModel::builtin(base).unwrap();
        let g = PeriodicGrid::unit(16).unwrap();
        let opts = StationaryOptions { seed: Some(seed), ..StationaryOptions::default() };
        let sol = solve_stationary_ergodic(&model, g, &opts).unwrap();
        prop_assert!((sol.m_bar.max() - 1.0).abs() <= 1e-10 && (sol.m_bar.min() - 1.0).abs() <= 1e-10);
        prop_assert_eq!(sol.seed, Some(seed));
    }

    #[test]
    fn monotone_linear_coupling_bounds_eta_c(a in 0.01f64..10.0, w in prop::collection::vec(0.3f64..2.0, 24)) {
        let g = PeriodicGrid::unit(24).unwrap();
        let m = ScalarField::new(g, w).unwrap();
        let m = m.scale(1.0 / m.integral());
        let sol = solution_from_density(&m, 0.0).unwrap();
        let model = CouplingModel::linear(a).unwrap();
        prop_assert!(eta_form(&sol, &model, 0.0, EtaForm::C).unwrap() >= a - 1e-8);
    }

    #[test]
    fn mild_non_monotonicity_keeps_eta_b_positive(frac in 0.0f64..0.95, w in prop::collection::vec(0.5f64..1.5, 24)) {
        let g = PeriodicGrid::unit(24).unwrap();
        let m = ScalarField::new(g, w).unwrap();
        let m = m.scale(1.0 / m.integral());
        let sol = solution_from_density(&m, 0.0).unwrap();
        let c_p = poincare_constant(&m).unwrap();
        // f_m m_bar >= -frac / C_P everywhere.
        let a = -frac / (c_p * m.max());
        let model = CouplingModel::linear(a).unwrap();
        prop_assert!(eta_form(&sol, &model, 0.0, EtaForm::B).unwrap() > 0.0);
    }

    #[test]
    fn principal_minimizer_is_deflated(w in prop::collection::vec(0.3f64..2.0, 20), a in -5.0f64..5.0) {
        let g = PeriodicGrid::unit(20).unwrap();
        let m = ScalarField::new(g, w).unwrap();
        let sol = solution_from_density(&m, 0.0).unwrap();
        let pair = principal_eigenpair(&sol, &CouplingModel::linear(a).unwrap(), 0.0).unwrap();
        prop_assert!(pair.mu.integral().abs() <= 1e-12);
        prop_assert!(pair.residual_second <= 1e-10);
    }
}

#[test]
fn stationary_invariants_on_a_non_monotone_model() {
    let l = 2.0 * std::f64::consts::PI;
    let g = PeriodicGrid::new(1, 48, l).unwrap();
    let model =
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, l).unwrap();
    let sol = solve_stationary_ergodic(&model, g, &StationaryOptions::default()).unwrap();
    assert!((sol.m_bar.integral() - 1.0).abs() <= 1e-12);
    assert!(sol.m_bar.min() > 0.0);
    assert!(sol.residual_fp <= 1e-12, "{}", sol.residual_fp);
    assert!(sol.residual_ansatz <= 1e-12, "{}", sol.residual_ansatz);
    assert!(sol.residual_hjb <= 1e-8, "{}", sol.residual_hjb);
    assert!(sol.energy_trace.windows(2).all(|w| w[1] <= w[0]), "energy increased along accepted steps");
    let final_energy = static_energy(&model, &sol.m_bar).unwrap();
    assert!((final_energy - sol.energy_trace.last().unwrap()).abs() <= 1e-12 * final_energy.abs().max(1.0));
}

#[test]
fn stabilization_raises_coercivity_and_keeps_the_equilibrium() {
    let l = 2.0 * std::f64::consts::PI;
    let g = PeriodicGrid::new(1, 32, l).unwrap();
    let base =
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, l).unwrap();
    let mut sol = solve_stationary_ergodic(&base, g, &StationaryOptions::default()).unwrap();
    let absorbed = sol.absorbed_model(&base);
    let before = analyze(&sol, &absorbed, 0.0).unwrap();
    let stabilized = absorbed.stabilize(&sol.m_bar, 0.5).unwrap();
    let after = analyze(&sol, &stabilized, 0.0).unwrap();
    assert!(after.eta_a > before.eta_a, "{} <= {}", after.eta_a, before.eta_a);
    let residual = sol.residual_hjb;
    sol.refresh_residuals(&base.stabilize(&sol.m_bar, 0.5).unwrap()).unwrap();
    assert!((sol.residual_hjb - residual).abs() <= 1e-12);
}

#[test]
fn stabilized_form_adds_exactly_eta_times_the_l2_norm() {
    use mfglab::stability::second_variation;
    use rand::{Rng, SeedableRng};
    let g = PeriodicGrid::unit(32).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let m = ScalarField::new(g, (0..32).map(|_| rng.gen_range(0.5..1.5)).collect()).unwrap();
    let base = CouplingModel::linear(-0.4).unwrap();
    let stabilized = base.stabilize(&m, 0.7).unwrap();
    for _ in 0..10 {
        let mut mu = ScalarField::new(g, (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        mu = mu.sub(&ScalarField::constant(g, mu.mean())).unwrap();
        let added = second_variation(&m, &stabilized, &mu).unwrap() - second_variation(&m, &base, &mu).unwrap();
        let expected = 0.7 * mu.dot(&mu).unwrap();
        assert!((added - expected).abs() <= 1e-10 * expected, "{added} vs {expected}");
    }
}
