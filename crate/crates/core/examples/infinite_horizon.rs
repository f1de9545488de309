//! Infinite-horizon limit by solving on growing horizons and comparing on a common window.

use std::f64::consts::PI;

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::dynamics::{solve_infinite_horizon, SolveOptions};
use mfglab::expr::FieldExpr;
use mfglab::stability::analyze;
use mfglab::stationary::{solve_stationary_ergodic, StationaryOptions};
use mfglab::PeriodicGrid;

fn main() -> mfglab::Result<()> {
    let length = 2.0 * PI;
    let grid = PeriodicGrid::new(1, 32, length)?;
    let base =
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, length)?;
    let sol = solve_stationary_ergodic(&base, grid, &StationaryOptions::default())?;
    let model = sol.absorbed_model(&base).stabilize(&sol.m_bar, 1.0)?;
    let report = analyze(&sol, &model, 0.0)?;
    let opts = SolveOptions { envelope_rates: report.rates().map(|r| (r.sigma1, r.sigma2)), ..SolveOptions::default() };

    let mu0 = FieldExpr::parse("0.01*cos(2*pi*x/L)")?.sample(grid)?;
    let res = solve_infinite_horizon(&mu0, 0.0, &sol, &model, &[4.0, 8.0, 16.0], &opts)?;
    for (pair, d) in res.horizons.windows(2).zip(&res.discrepancies) {
        println!("horizons {:>4} vs {:>4}: discrepancy {:.3e}", pair[0], pair[1], d);
    }
    println!("converged: {}", res.converged);
    let tail = &res.solution;
    for k in (0..=tail.n_steps).step_by(tail.n_steps / 8) {
        println!("t = {:>6.2}  sup |mu| = {:.4e}", tail.times[k], tail.mu_path[k].sup_norm());
    }
    Ok(())
}
