//! Spectrum of the linearized forward-backward operator and a linear two-point solve.

use std::f64::consts::PI;

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::linearized::{assemble, hyperbolicity_report, solve_linear_tpbvp};
use mfglab::stationary::{solve_stationary_ergodic, StationaryOptions};
use mfglab::{PeriodicGrid, ScalarField};

fn main() -> mfglab::Result<()> {
    let length = 2.0 * PI;
    let grid = PeriodicGrid::new(1, 32, length)?;
    let base =
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, length)?;
    let sol = solve_stationary_ergodic(&base, grid, &StationaryOptions::default())?;
    let model = sol.absorbed_model(&base).stabilize(&sol.m_bar, 1.0)?;

    let sys = assemble(&sol, &model, 0.0)?;
    println!("identity defects: {:?}", sys.identity_errors);
    let rep = hyperbolicity_report(&sys)?;
    println!("smallest |Re|     {:.6}", rep.min_abs_real_part);
    println!("quadruple error   {:.3e}", rep.quadruple_error);
    let mut spectrum = rep.spectrum.clone();
    spectrum.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()));
    for (re, im) in spectrum.iter().take(8) {
        println!("  {re:>12.6} {im:>+12.6}i");
    }

    let mu0 = ScalarField::from_fn(grid, |x| 0.01 * (x[0]).cos())?;
    let paths = solve_linear_tpbvp(&sys, &mu0, &ScalarField::zeros(grid), 8.0, 800)?;
    for k in (0..paths.times.len()).step_by(100) {
        println!("t = {:>5.2}  sup |mu| = {:.4e}", paths.times[k], paths.mu_path[k].sup_norm());
    }
    Ok(())
}
