//! Spectral invariants of the linearized forward-backward system.

use std::f64::consts::PI;

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::linearized::{assemble, hyperbolicity_report};
use mfglab::stability::{analyze, solution_from_density};
use mfglab::stationary::{solve_stationary_ergodic, StationaryOptions};
use mfglab::{PeriodicGrid, ScalarField};

fn models(length: f64) -> Vec<CouplingModel> {
    vec![
        CouplingModel::zero(),
        CouplingModel::linear(1.0).unwrap(),
        CouplingModel::linear(-0.5).unwrap(),
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, length)
            .unwrap(),
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.1, a: 1.0, b: 0.5 }, length)
            .unwrap(),
    ]
}

#[test]
fn spectrum_is_symmetric_across_models_and_discounts() {
    for (n, length) in [(16, 1.0), (32, 2.0 * PI), (64, 1.0)] {
        let g = PeriodicGrid::new(1, n, length).unwrap();
        for model in models(length) {
            let sol = solve_stationary_ergodic(&model, g, &StationaryOptions::default()).unwrap();
            let absorbed = sol.absorbed_model(&model);
            for delta in [0.0, 0.3] {
                let sys = assemble(&sol, &absorbed, delta).unwrap();
                let rep = hyperbolicity_report(&sys).unwrap();
                assert!(rep.quadruple_error <= 1e-8, "N={n} L={length} delta={delta}: {:e}", rep.quadruple_error);
            }
        }
    }
}

#[test]
fn stable_non_monotone_equilibrium_is_hyperbolic() {
    let length = 2.0 * PI;
    let g = PeriodicGrid::new(1, 32, length).unwrap();
    let base = CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, length)
        .unwrap();
    let sol = solve_stationary_ergodic(&base, g, &StationaryOptions::default()).unwrap();
    let model = sol.absorbed_model(&base).stabilize(&sol.m_bar, 1.0).unwrap();
    assert!(analyze(&sol, &model, 0.0).unwrap().satisfied);
    let rep = hyperbolicity_report(&assemble(&sol, &model, 0.0).unwrap()).unwrap();
    assert!(rep.min_abs_real_part > 1e-6, "{:e}", rep.min_abs_real_part);
}

#[test]
fn destabilizing_coupling_collapses_the_spectral_gap() {
    let g = PeriodicGrid::unit(32).unwrap();
    let sol = solution_from_density(&ScalarField::constant(g, 1.0), 0.0).unwrap();
    let k2 = 4.0 * PI * PI;
    let mut previous: Option<(f64, f64)> = None;
    let mut last_eta = 0.0;
    for a in [0.0, -0.5 * k2, -1.5 * k2] {
        let model = CouplingModel::linear(a).unwrap();
        let eta = analyze(&sol, &model, 0.0).unwrap().eta_a;
        let gap = hyperbolicity_report(&assemble(&sol, &model, 0.0).unwrap()).unwrap().min_abs_real_part;
        if let Some((prev_eta, prev_gap)) = previous {
            assert!(eta < prev_eta, "eta {eta} >= {prev_eta} at a = {a}");
            assert!(gap < prev_gap, "gap {gap} >= {prev_gap} at a = {a}");
        }
        previous = Some((eta, gap));
        last_eta = eta;
    }
    assert!(last_eta < 0.0);
    let (_, last_gap) = previous.unwrap();
    assert!(last_gap <= 1e-6, "{last_gap:e}");
}
