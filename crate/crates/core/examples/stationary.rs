//! Stationary equilibrium of a non-monotone coupling on the torus of side 2 pi.

use std::f64::consts::PI;

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::stationary::{solve_stationary_ergodic, StationaryOptions};
use mfglab::PeriodicGrid;

fn main() -> mfglab::Result<()> {
    let length = 2.0 * PI;
    let grid = PeriodicGrid::new(1, 64, length)?;
    let model =
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, length)?;
    let sol = solve_stationary_ergodic(&model, grid, &StationaryOptions::default())?;

    println!("lambda          {:.12}", sol.lambda);
    println!("iterations      {}", sol.iterations);
    println!("residual hjb    {:.3e}", sol.residual_hjb);
    println!("residual fp     {:.3e}", sol.residual_fp);
    println!("density range   [{:.6}, {:.6}]", sol.m_bar.min(), sol.m_bar.max());
    println!("energy          {:.12} -> {:.12}", sol.energy_trace[0], sol.energy_trace.last().unwrap());
    println!("\n{:>10} {:>12} {:>12}", "x", "m_bar", "u_bar");
    for i in (0..grid.cell_count()).step_by(8) {
        println!("{:>10.4} {:>12.6} {:>12.6}", grid.center(i)[0], sol.m_bar.values()[i], sol.u_bar.values()[i]);
    }
    Ok(())
}
