//! Finite-horizon solve near a stable equilibrium: the perturbation decays away from both ends.

use std::f64::consts::PI;

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::diagnostics::envelope_fit;
use mfglab::dynamics::{solve_mfg, SolveOptions};
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
    let rates = report.rates().map(|r| (r.sigma1, r.sigma2));

    let mu0 = FieldExpr::parse("0.01*cos(2*pi*x/L)")?.sample(grid)?;
    let v_t = FieldExpr::parse("0.005*sin(2*pi*x/L)")?.sample(grid)?;
    let horizon = 8.0;
    let opts = SolveOptions { envelope_rates: rates, ..SolveOptions::default() };
    let run = solve_mfg(&mu0, &v_t, horizon, 0.0, &sol, &model, &opts)?;

    println!("steps {}, outer iterations {}, mass drift {:.1e}", run.n_steps, run.trace.len(), run.max_mass_error);
    let linf: Vec<f64> = run.mu_path.iter().map(|m| m.sup_norm()).collect();
    println!("{:>8} {:>12}", "t", "sup |mu|");
    for k in (0..=run.n_steps).step_by(run.n_steps / 16) {
        println!("{:>8.3} {:>12.4e}", run.times[k], linf[k]);
    }
    let fit = envelope_fit(&linf, &run.times, rates);
    println!("fitted rates: left {:?}, right {:?}", fit.rate_left, fit.rate_right);
    Ok(())
}
