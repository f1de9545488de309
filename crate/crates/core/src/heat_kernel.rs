//! `L^p` norms of the Euclidean heat kernel `(4 pi t)^{-n/2} exp(-|x|^2 / 4t)` and its gradient.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::quadrature::gauss8_composite;

fn check(n: usize, p: f64, t: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("exponent p must be >= 1, got {p}")));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be positive, got {t}")));
    }
    Ok(())
}

/// `1/p'` for the conjugate exponent, with `1/p' = 1` at `p = inf`.
fn inv_conjugate(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        1.0 - 1.0 / p
    }
}

/// `||Gamma(t, .)||_p = p^{-n/2p} (4 pi t)^{-n/2p'}`.
pub fn heat_kernel_lp_norm(n: usize, p: f64, t: f64) -> Result<f64> {
    check(n, p, t)?;
    if p == 1.0 {
        return Ok(1.0);
    }
    let nf = n as f64;
    let mass = if p.is_infinite() { 1.0 } else { p.powf(-nf / (2.0 * p)) };
    Ok(mass * (4.0 * PI * t).powf(-nf * inv_conjugate(p) / 2.0))
}

/// Surface measure of the unit sphere in `R^n`.
fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI * sphere_area(n - 2) / (n - 2) as f64,
    }
}

fn compute_gradient_constant(n: usize, p: f64) -> f64 {
    let nf = n as f64;
    let gamma = |r: f64| (4.0 * PI).powf(-nf / 2.0) * (-r * r / 4.0).exp();
    if p.is_infinite() {
        // |x|/2 * Gamma(1, x) peaks at |x| = sqrt(2).
        let r = 2f64.sqrt();
        return r / 2.0 * gamma(r);
    }
    // The integrand decays like exp(-p r^2 / 4); beyond this radius it is below 1e-40 of its peak.
    let radius = (4.0 * 100.0 / p).sqrt() + 4.0;
    let integrand = |r: f64| r.powf(nf - 1.0) * (r / 2.0 * gamma(r)).powf(p);
    let integral = sphere_area(n) * gauss8_composite(integrand, 0.0, radius, 400);
    integral.powf(1.0 / p)
}

/// `C_2(n, p) = || |D Gamma(1, .)| ||_p`, computed by radial quadrature once per `(n, p)`.
pub fn gradient_constant(n: usize, p: f64) -> Result<f64> {
    check(n, p, 1.0)?;
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (n, p.to_bits());
    if let Some(v) = cache.lock().map_err(|_| Error::Invariant("poisoned cache".into()))?.get(&key) {
        return Ok(*v);
    }
    let v = compute_gradient_constant(n, p);
    cache.lock().map_err(|_| Error::Invariant("poisoned cache".into()))?.insert(key, v);
    Ok(v)
}

/// `|| |D Gamma(t, .)| ||_p = C_2(n, p) t^{-n/2p' - 1/2}`.
pub fn heat_kernel_grad_lp_norm(n: usize, p: f64, t: f64) -> Result<f64> {
    check(n, p, t)?;
    let exponent = -(n as f64) * inv_conjugate(p) / 2.0 - 0.5;
    Ok(gradient_constant(n, p)? * t.powf(exponent))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p_one_is_exactly_one() {
        for t in [1e-3, 0.25, 1.0, 4.0, 1e3] {
            assert_eq!(heat_kernel_lp_norm(1, 1.0, t).unwrap(), 1.0);
            assert_eq!(heat_kernel_lp_norm(3, 1.0, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn closed_form_values() {
        let v = heat_kernel_lp_norm(1, 2.0, 1.0).unwrap();
        assert!((v - (8.0 * PI).powf(-0.25)).abs() < 1e-15);
        let ratio = heat_kernel_lp_norm(1, 2.0, 4.0).unwrap() / v;
        assert!((ratio - 4f64.powf(-0.25)).abs() < 1e-15);
        let sup = heat_kernel_lp_norm(2, f64::INFINITY, 2.0).unwrap();
        assert!((sup - 1.0 / (8.0 * PI)).abs() < 1e-15);
    }

    #[test]
    fn gradient_constant_in_one_dimension() {
        // || |x|/2 Gamma(1,x) ||_1 = 2 * int_0^inf r/2 e^{-r^2/4} / sqrt(4 pi) dr = 2 / sqrt(4 pi).
        let c = gradient_constant(1, 1.0).unwrap();
        assert!((c - 1.0 / PI.sqrt()).abs() < 1e-12);
        let scaled = heat_kernel_grad_lp_norm(1, 1.0, 4.0).unwrap();
        assert!((scaled - c / 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(heat_kernel_lp_norm(1, 2.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(heat_kernel_lp_norm(1, 0.5, 1.0), Err(Error::Domain(_))));
        assert!(heat_kernel_grad_lp_norm(1, 2.0, -1.0).is_err());
    }
}
