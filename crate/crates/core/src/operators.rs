//! Conservative finite-volume operators on the torus.
//!
//! The advected density in `A` uses the arithmetic face mean, while the
//! diffusion weight of `BB*` uses the harmonic face mean of the stationary
//! density. With that pairing `BB* = -A T_m = -T_m A*` holds to rounding.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FacetField, ScalarField};

/// Forward difference `(f_{i+1} - f_i) / h` on every face.
pub fn grad(f: &ScalarField) -> FacetField {
    let g = *f.grid();
    let cells = g.cell_count();
    let h = g.h();
    let v = f.values();
    let mut out = vec![0.0; g.dim() * cells];
    for axis in 0..g.dim() {
        for i in 0..cells {
            out[axis * cells + i] = (v[g.neighbor(i, axis, 1)] - v[i]) / h;
        }
    }
    FacetField::from_raw(g, out)
}

pub fn div(flux: &FacetField) -> ScalarField {
    flux.div()
}

/// Second-order periodic Laplacian, `div(grad f)`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    grad(f).div()
}

fn face_mean(f: &ScalarField, mean: impl Fn(f64, f64) -> f64) -> FacetField {
    let g = *f.grid();
    let cells = g.cell_count();
    let v = f.values();
    let mut out = vec![0.0; g.dim() * cells];
    for axis in 0..g.dim() {
        for i in 0..cells {
            out[axis * cells + i] = mean(v[i], v[g.neighbor(i, axis, 1)]);
        }
    }
    FacetField::from_raw(g, out)
}

pub fn face_mean_arith(f: &ScalarField) -> FacetField {
    face_mean(f, |a, b| 0.5 * (a + b))
}

pub fn face_mean_harm(f: &ScalarField) -> FacetField {
    face_mean(f, |a, b| 2.0 * a * b / (a + b))
}

pub fn check_positive(m_bar: &ScalarField) -> Result<()> {
    match m_bar.values().iter().position(|&v| v <= 0.0) {
        Some(i) => {
            Err(Error::Domain(format!("stationary density must be positive, got {} at cell {i}", m_bar.values()[i])))
        }
        None => Ok(()),
    }
}

/// Face value of the stationary drift `Du`, derived from the density as `-Grad m / mean(m)`.
pub fn drift(m_bar: &ScalarField) -> Result<FacetField> {
    check_positive(m_bar)?;
    let gm = grad(m_bar);
    gm.zip_map(&face_mean_arith(m_bar), |d, m| -d / m)
}

/// `A f = Div(Grad f + mean(f) Du)`.
pub fn apply_a(m_bar: &ScalarField, f: &ScalarField) -> Result<ScalarField> {
    m_bar.grid().check_same(f.grid())?;
    let d = drift(m_bar)?;
    let flux = grad(f).zip_map(&face_mean_arith(f).mul(&d)?, |a, b| a + b)?;
    Ok(flux.div())
}

/// `A* g = Div(harm(m) Grad g) / m`, the adjoint of `A`.
pub fn apply_astar(m_bar: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    m_bar.grid().check_same(g.grid())?;
    check_positive(m_bar)?;
    face_mean_harm(m_bar).mul(&grad(g))?.div().zip_map(m_bar, |a, m| a / m)
}

/// `BB* h = -Div(harm(m) Grad h)`.
pub fn apply_bbstar(m_bar: &ScalarField, h: &ScalarField) -> Result<ScalarField> {
    m_bar.grid().check_same(h.grid())?;
    check_positive(m_bar)?;
    Ok(face_mean_harm(m_bar).mul(&grad(h))?.div().scale(-1.0))
}

/// Sup norm of `Grad m + mean(m) Du` at faces for a given potential `u`.
pub fn ansatz_residual(u_bar: &ScalarField, m_bar: &ScalarField) -> Result<f64> {
    m_bar.grid().check_same(u_bar.grid())?;
    let flux = grad(m_bar).add(&face_mean_arith(m_bar).mul(&grad(u_bar))?)?;
    Ok(flux.sup_norm())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Linf,
    L2WeightedInv,
    L2Weighted,
    W1inf,
}

impl FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linf" => Ok(Self::Linf),
            "l2_weighted_inv" => Ok(Self::L2WeightedInv),
            "l2_weighted" => Ok(Self::L2Weighted),
            "w1inf" => Ok(Self::W1inf),
            other => Err(Error::Usage(format!("unknown norm kind `{other}`"))),
        }
    }
}

/// Norms used to measure data and perturbations.
///
/// `l2_weighted` uses the harmonic face mean so that its square equals `<f, BB* f>`.
pub fn weighted_norm(field: &ScalarField, m_bar: &ScalarField, kind: NormKind) -> Result<f64> {
    field.grid().check_same(m_bar.grid())?;
    match kind {
        NormKind::Linf => Ok(field.sup_norm()),
        NormKind::L2WeightedInv => {
            check_positive(m_bar)?;
            Ok(field.zip_map(m_bar, |f, m| f * f / m)?.integral().sqrt())
        }
        NormKind::L2Weighted => {
            check_positive(m_bar)?;
            let gf = grad(field);
            Ok(face_mean_harm(m_bar).zip_map(&gf, |m, d| m * d * d)?.integral().sqrt())
        }
        NormKind::W1inf => Ok(field.sup_norm() + grad(field).sup_norm()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn sine(n: usize, k: f64) -> ScalarField {
        ScalarField::from_fn(PeriodicGrid::unit(n).unwrap(), |x| (2.0 * PI * k * x[0]).sin()).unwrap()
    }

    fn random_field(g: PeriodicGrid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
        ScalarField::new(g, (0..g.cell_count()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn laplacian_of_constant_and_sine() {
        let g = PeriodicGrid::unit(128).unwrap();
        assert_eq!(laplacian(&ScalarField::constant(g, 3.5)).sup_norm(), 0.0);
        let f = sine(128, 1.0);
        let exact = f.scale(-4.0 * PI * PI);
        let err = laplacian(&f).sub(&exact).unwrap().sup_norm();
        assert!(err / exact.sup_norm() < 5e-3);
    }

    #[test]
    fn laplacian_is_second_order() {
        let err = |n| {
            let f = sine(n, 1.0);
            laplacian(&f).sub(&f.scale(-4.0 * PI * PI)).unwrap().sup_norm()
        };
        for n in [32, 64, 128] {
            assert!(err(n) / err(2 * n) >= 3.8);
        }
    }

    #[test]
    fn a_annihilates_density_and_reduces_to_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = PeriodicGrid::unit(64).unwrap();
        let m = random_field(g, &mut rng, 0.2, 2.0);
        assert!(apply_a(&m, &m).unwrap().sup_norm() < 1e-12 * 64.0 * 64.0);
        let f = sine(64, 1.0);
        let one = ScalarField::constant(g, 1.0);
        assert_eq!(apply_a(&one, &f).unwrap(), laplacian(&f));
        assert!(apply_a(&m.scale(-1.0), &f).is_err());
    }

    #[test]
    fn bbstar_kernel_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [1, 2] {
            let g = PeriodicGrid::new(dim, 16, 1.0).unwrap();
            let m = random_field(g, &mut rng, 0.1, 3.0);
            let f = random_field(g, &mut rng, -1.0, 1.0);
            assert!(apply_bbstar(&m, &ScalarField::constant(g, 2.0)).unwrap().sup_norm() == 0.0);
            let lhs = apply_bbstar(&m, &f).unwrap();
            let rhs = apply_a(&m, &m.mul(&f).unwrap()).unwrap();
            let scale = lhs.sup_norm().max(1.0);
            assert!(lhs.add(&rhs).unwrap().sup_norm() <= 1e-13 * scale);
            let rhs2 = apply_astar(&m, &f).unwrap().mul(&m).unwrap();
            assert!(lhs.add(&rhs2).unwrap().sup_norm() <= 1e-13 * scale);
        }
    }

    #[test]
    fn flux_outputs_integrate_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = PeriodicGrid::unit(32).unwrap();
        for _ in 0..100 {
            let m = random_field(g, &mut rng, 0.1, 3.0);
            let f = random_field(g, &mut rng, -1.0, 1.0);
            for out in [laplacian(&f), apply_a(&m, &f).unwrap(), apply_bbstar(&m, &f).unwrap()] {
                let scale = out.sup_norm().max(1.0);
                assert!(out.integral().abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn norms_closed_forms() {
        let g = PeriodicGrid::unit(128).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let zero = ScalarField::zeros(g);
        for kind in [NormKind::Linf, NormKind::L2WeightedInv, NormKind::L2Weighted, NormKind::W1inf] {
            assert_eq!(weighted_norm(&zero, &one, kind).unwrap(), 0.0);
        }
        let f = sine(128, 1.0);
        let l2 = weighted_norm(&f, &one, NormKind::L2WeightedInv).unwrap();
        assert!((l2 - 0.5f64.sqrt()).abs() < 1e-3);
        let w = weighted_norm(&f, &one, NormKind::W1inf).unwrap();
        assert!((w - (1.0 + 2.0 * PI)).abs() / (1.0 + 2.0 * PI) < 5e-3);
        assert!(matches!("h1".parse::<NormKind>(), Err(Error::Usage(_))));
    }
}
