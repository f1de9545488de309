//! Fixed-order Gauss-Legendre rules.

const GL8_NODES: [f64; 4] =
    [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL8_WEIGHTS: [f64; 4] =
    [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

/// 8-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss8(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
        s += w * (f(mid - half * x) + f(mid + half * x));
    }
    half * s
}

/// Composite 8-point rule with `panels` equal subintervals.
pub fn gauss8_composite(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let w = (b - a) / panels as f64;
    (0..panels).map(|k| gauss8(&f, a + k as f64 * w, a + (k + 1) as f64 * w)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_degree_fifteen() {
        let v = gauss8(|x| x.powi(15) + 3.0 * x.powi(14), -1.0, 1.0);
        assert!((v - 6.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn composite_gaussian() {
        let v = gauss8_composite(|x| (-x * x).exp(), -10.0, 10.0, 40);
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }
}
