//! Lyapunov functional, dissipation residual and weighted decay checks along one run.

use std::f64::consts::PI;

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::diagnostics::turnpike_report;
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
    let opts = SolveOptions { envelope_rates: report.rates().map(|r| (r.sigma1, r.sigma2)), ..SolveOptions::default() };

    let mu0 = FieldExpr::parse("0.01*cos(2*pi*x/L)")?.sample(grid)?;
    let v_t = FieldExpr::parse("0.005*sin(2*pi*x/L)")?.sample(grid)?;
    let run = solve_mfg(&mu0, &v_t, 5.0, 0.0, &sol, &model, &opts)?;
    let r = turnpike_report(&run, &sol, &model, &report, 10.0)?;

    println!("{:>7} {:>13} {:>13}", "t", "phi", "residual");
    for k in (0..r.times.len()).step_by(r.times.len() / 10) {
        println!("{:>7.3} {:>13.5e} {:>13.3e}", r.times[k], r.phi_series[k], r.dissipation_residual[k]);
    }
    println!("dissipation residual (middle 80%)  {:.3e}", r.dissipation_summary);
    println!("decay inequality holds             {:?}", r.phidelta_ok);
    println!("sup |v| bound holds                {:?}", r.bound_constants.c_v_ok);
    let w = &r.weighted_l2;
    println!(
        "weighted L2 envelopes: applicable {}, passed {}, worst ratios {:.2e} / {:.2e}",
        w.applicable, w.passed, w.worst_ratio_mu, w.worst_ratio_dv
    );
    Ok(())
}
