//! Fitted decay rates as the discount grows, with the equilibrium held fixed.

use mfglab::cli::{prepare, with_discount};
use mfglab::config::RunConfig;
use mfglab::diagnostics::envelope_fit;
use mfglab::dynamics::solve_mfg;
use rayon::prelude::*;

fn main() -> mfglab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/turnpike.json");
    let (cfg, _) = RunConfig::from_path(path)?;
    let base = prepare(&cfg, 0.0)?;
    let sigma = base.report.sigma.expect("stability condition holds");
    let (mu0, v_t) = cfg.data_fields(base.grid, 1.0)?;

    let fractions = [0.0, 0.25, 0.5, 0.9];
    let rows: Vec<_> = fractions
        .par_iter()
        .map(|f| -> mfglab::Result<_> {
            let setup = with_discount(&base, f * sigma)?;
            let rates = setup.report.rates().map(|r| (r.sigma1, r.sigma2));
            let run =
                solve_mfg(&mu0, &v_t, 8.0, setup.sol.delta, &setup.sol, &setup.model, &cfg.solver_options(rates))?;
            let linf: Vec<f64> = run.mu_path.iter().map(|m| m.sup_norm()).collect();
            Ok((f, envelope_fit(&linf, &run.times, rates)))
        })
        .collect::<mfglab::Result<_>>()?;
    println!("{:>12} {:>12} {:>12}", "delta/sigma", "left rate", "right rate");
    for (f, fit) in rows {
        println!("{f:>12} {:>12.5} {:>12.5}", fit.rate_left.unwrap_or(f64::NAN), fit.rate_right.unwrap_or(f64::NAN));
    }
    Ok(())
}
