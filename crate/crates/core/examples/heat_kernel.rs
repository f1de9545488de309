//! Lp norms of the Euclidean heat kernel and its gradient against their scaling laws.

use mfglab::heat_kernel::{gradient_constant, heat_kernel_grad_lp_norm, heat_kernel_lp_norm};

fn main() -> mfglab::Result<()> {
    for n in [1, 2] {
        for p in [1.0, 2.0, f64::INFINITY] {
            println!("dimension {n}, p = {p}, gradient constant {:.6}", gradient_constant(n, p)?);
            for t in [0.01, 0.1, 1.0, 10.0] {
                let exponent = -(n as f64) / 2.0 * (1.0 - 1.0 / p) + 0.0;
                let norm = heat_kernel_lp_norm(n, p, t)?;
                let grad = heat_kernel_grad_lp_norm(n, p, t)?;
                println!(
                    "  t = {t:>5}  |K|_p = {norm:.6e}  |K|_p / t^{exponent:.2} = {:.6}  |DK|_p = {grad:.6e}",
                    norm / t.powf(exponent)
                );
            }
        }
    }
    Ok(())
}
