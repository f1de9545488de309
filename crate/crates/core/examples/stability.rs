//! Coercivity constants and predicted decay rates, before and after stabilizing the coupling.

use std::f64::consts::PI;

use mfglab::coupling::{Builtin, CouplingModel};
use mfglab::stability::{analyze, StabilityReport};
use mfglab::stationary::{solve_stationary_ergodic, StationaryOptions};
use mfglab::PeriodicGrid;

fn show(label: &str, r: &StabilityReport) {
    println!("{label}");
    println!("  Poincare constant   {:.6}", r.c_p);
    println!("  eta (a, b, c)       {:.6}  {:.6}  {:.6}", r.eta_a, r.eta_b, r.eta_c);
    println!("  principal eta       {:.6} (multiplicity {})", r.eta_principal, r.eta_principal_multiplicity);
    println!("  condition holds     {}", r.satisfied);
    if let Some(rates) = r.rates() {
        println!("  rates (sigma, left, right)  {:.3e}  {:.3e}  {:.3e}", rates.sigma, rates.sigma1, rates.sigma2);
    }
}

fn main() -> mfglab::Result<()> {
    let length = 2.0 * PI;
    let grid = PeriodicGrid::new(1, 32, length)?;
    let base =
        CouplingModel::with_period(Builtin::PotentialPlusSaturating { theta_amp: 0.5, a: -0.6, b: 0.0 }, length)?;
    let sol = solve_stationary_ergodic(&base, grid, &StationaryOptions::default())?;
    let model = sol.absorbed_model(&base);

    show("as given", &analyze(&sol, &model, 0.0)?);
    let stabilized = model.stabilize(&sol.m_bar, 1.0)?;
    show("stabilized by 1.0 (m - m_bar)", &analyze(&sol, &stabilized, 0.0)?);
    Ok(())
}
