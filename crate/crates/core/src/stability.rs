//! Spectral certificates of local stability around a stationary equilibrium.
//!
//! Quadratic forms are written in `z = mu / m_bar`, where
//! `Q(z) = int f_m(x, m_bar) m_bar^2 z^2 + m_bar |Dz|^2 + delta m_bar z^2` and the
//! three denominators are `int m_bar |Dz|^2`, `int m_bar z^2` and `int m_bar^2 z^2`.
//! The constraint `int m_bar z = 0` is imposed by restricting to an orthonormal
//! basis of its solution space, which keeps every pencil symmetric-definite.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::grid::ScalarField;
use crate::linalg::{complement_basis, symmetric_pencil, Stencil};
use crate::operators::check_positive;
use crate::stationary::StationarySolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaForm {
    /// Denominator `int m_bar |Dz|^2`.
    A,
    /// Denominator `int m_bar z^2 = int mu^2 / m_bar`.
    B,
    /// Denominator `int m_bar^2 z^2 = int mu^2`.
    C,
}

/// Dense assembly of the forms in the `z` variable, with quadrature weights included.
struct Forms {
    numerator: DMatrix<f64>,
    gradient: DMatrix<f64>,
    mass: DVector<f64>,
    m_bar: ScalarField,
}

impl Forms {
    fn new(m_bar: &ScalarField, model: &CouplingModel, delta: f64) -> Result<Self> {
        check_positive(m_bar)?;
        let g = m_bar.grid();
        let w = g.cell_volume();
        let gradient = Stencil::bbstar_operator(m_bar)?.to_dense() * w;
        let mut numerator = gradient.clone();
        for i in 0..g.cell_count() {
            let m = m_bar.values()[i];
            numerator[(i, i)] += w * (model.deriv_m(g.center(i), m) * m * m + delta * m);
        }
        let mass = DVector::from_iterator(g.cell_count(), m_bar.values().iter().map(|m| w * m));
        Ok(Self { numerator, gradient, mass, m_bar: m_bar.clone() })
    }

    fn denominator(&self, form: EtaForm) -> DMatrix<f64> {
        match form {
            EtaForm::A => self.gradient.clone(),
            EtaForm::B => DMatrix::from_diagonal(&self.mass),
            EtaForm::C => {
                DMatrix::from_diagonal(&self.mass.component_mul(&DVector::from_column_slice(self.m_bar.values())))
            }
        }
    }

    /// Eigenvalues and full-space eigenvectors of the deflated pencil.
    fn pencil(&self, numerator: &DMatrix<f64>, form: EtaForm) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let p = complement_basis(self.m_bar.values());
        let k = p.transpose() * numerator * &p;
        let b = p.transpose() * self.denominator(form) * &p;
        let (vals, vecs) = symmetric_pencil(&k, &b)?;
        Ok((vals, p * vecs))
    }
}

/// Weighted Poincaré constant: `1 / theta_1` for `BB* g = theta m_bar g` on weighted-mean-zero `g`.
pub fn poincare_constant(m_bar: &ScalarField) -> Result<f64> {
    let forms = Forms::new(m_bar, &CouplingModel::zero(), 0.0)?;
    let (vals, _) = forms.pencil(&forms.gradient, EtaForm::B)?;
    let theta = vals[0];
    if theta <= 1e-12 {
        return Err(Error::Numeric(format!("degenerate weight: first Poincaré eigenvalue {theta:.3e}")));
    }
    Ok(1.0 / theta)
}

/// Minimum of `Q(z) / B_form(z)` over `int m_bar z = 0`; negative when stability fails.
pub fn eta_form(sol: &StationarySolution, model: &CouplingModel, delta: f64, form: EtaForm) -> Result<f64> {
    eta_form_for_density(&sol.m_bar, model, delta, form)
}

pub fn eta_form_for_density(m_bar: &ScalarField, model: &CouplingModel, delta: f64, form: EtaForm) -> Result<f64> {
    let forms = Forms::new(m_bar, model, delta)?;
    Ok(forms.pencil(&forms.numerator, form)?.0[0])
}

/// The minimizer of form (b) and the associated eigenvalue system.
#[derive(Clone, Debug)]
pub struct PrincipalEigenpair {
    pub eta1: f64,
    /// `-mu / m_bar`.
    pub v: ScalarField,
    /// Normalized so that `int mu^2 / m_bar = 1`.
    pub mu: ScalarField,
    /// Constant in `f_m mu + BB* z / m_bar + delta z = eta1 z + ell`.
    pub ell: f64,
    /// Number of eigenvalues within `1e-8` of `eta1` (1 when simple).
    pub multiplicity: usize,
    /// Sup residual of the first equation of the eigenvalue system in `(v, mu)` form.
    pub residual_first: f64,
    /// Sup residual of `Δmu + div(m_bar Dv) + div(mu Du) = 0`.
    pub residual_second: f64,
}

/// Computes the principal eigenpair through the symmetric form in `y = sqrt(m_bar) z`.
pub fn principal_eigenpair(sol: &StationarySolution, model: &CouplingModel, delta: f64) -> Result<PrincipalEigenpair> {
    let m_bar = &sol.m_bar;
    check_positive(m_bar)?;
    let g = *m_bar.grid();
    let n = g.cell_count();
    let w = g.cell_volume();
    let sqrt_m: Vec<f64> = m_bar.values().iter().map(|m| m.sqrt()).collect();
    let bb = Stencil::bbstar_operator(m_bar)?.to_dense();
    let fm = model.deriv_m_field(m_bar);
    // S = T^{-1/2} (BB* + diag(f_m m^2 + delta m)) T^{-1/2}
    let mut s = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            s[(i, j)] = bb[(i, j)] / (sqrt_m[i] * sqrt_m[j]);
        }
        let m = m_bar.values()[i];
        s[(i, i)] += fm.values()[i] * m + delta;
    }
    let s = crate::linalg::symmetrize(&s);
    let q = DVector::from_column_slice(&sqrt_m).normalize();
    let proj = DMatrix::identity(n, n) - &q * q.transpose();
    let bound = s.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max) + 1.0;
    let shifted = crate::linalg::symmetrize(&(&proj * &s * &proj + (&q * q.transpose()) * (2.0 * bound)));
    let eig = nalgebra::SymmetricEigen::new(shifted);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eta1 = eig.eigenvalues[order[0]];
    if !eta1.is_finite() {
        return Err(Error::Numeric("principal eigenvalue is not finite".into()));
    }
    let multiplicity =
        order.iter().take_while(|&&i| (eig.eigenvalues[i] - eta1).abs() <= 1e-8 * eta1.abs().max(1.0)).count();
    let y = eig.eigenvectors.column(order[0]).into_owned();
    // mu = sqrt(m) y, scaled so that int mu^2/m = int y^2 = 1.
    let scale = 1.0 / (w * y.norm_squared()).sqrt();
    let mut mu: Vec<f64> = (0..n).map(|i| sqrt_m[i] * y[i] * scale).collect();
    let pivot = mu.iter().enumerate().fold(0, |best, (i, v)| if v.abs() > mu[best].abs() + 1e-12 { i } else { best });
    if mu[pivot] < 0.0 {
        mu.iter_mut().for_each(|v| *v = -*v);
    }
    let mu = ScalarField::new(g, mu)?;
    let z = mu.zip_map(m_bar, |a, m| a / m)?;
    let v = z.scale(-1.0);

    // Residual of f_m mu + BB* z / m + delta z - eta1 z, whose weighted mean is ell.
    let bbz = Stencil::bbstar_operator(m_bar)?.apply_field(&z)?;
    let r: Vec<f64> = (0..n)
        .map(|i| fm.values()[i] * mu.values()[i] + bbz.values()[i] / m_bar.values()[i] + (delta - eta1) * z.values()[i])
        .collect();
    let r = ScalarField::from_raw(g, r);
    let ell = r.dot(m_bar)? / m_bar.integral();
    // First equation with v: -A* v + delta v - f_m mu = eta1 v - ell.
    let astar_v = Stencil::astar_operator(m_bar)?.apply_field(&v)?;
    let residual_first = (0..n)
        .map(|i| {
            (-astar_v.values()[i] + delta * v.values()[i] - fm.values()[i] * mu.values()[i] - eta1 * v.values()[i]
                + ell)
                .abs()
        })
        .fold(0.0, f64::max);
    let a_mu = Stencil::a_operator(m_bar)?.apply_field(&mu)?;
    let bb_v = Stencil::bbstar_operator(m_bar)?.apply_field(&v)?;
    let residual_second = a_mu.sub(&bb_v)?.sup_norm();
    Ok(PrincipalEigenpair { eta1, v, mu, ell, multiplicity, residual_first, residual_second })
}

/// Minimum of the second variation of the static energy over `int mu = 0`, `int mu^2/m_bar = 1`.
pub fn second_variation_check(sol: &StationarySolution, model: &CouplingModel) -> Result<f64> {
    if sol.delta != 0.0 {
        return Err(Error::Contract("second variation is defined for the ergodic problem only".into()));
    }
    eta_form(sol, model, 0.0, EtaForm::B)
}

/// Second variation of the static energy in direction `mu`: `int m_bar |D(mu/m_bar)|^2 + f_m mu^2`.
pub fn second_variation(m_bar: &ScalarField, model: &CouplingModel, mu: &ScalarField) -> Result<f64> {
    let z = mu.zip_map(m_bar, |a, m| a / m)?;
    let bbz = Stencil::bbstar_operator(m_bar)?.apply_field(&z)?;
    let fm = model.deriv_m_field(m_bar);
    Ok(z.dot(&bbz)? + fm.mul(mu)?.dot(mu)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PredictedRates {
    pub sigma: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub theta_cap: f64,
}

/// Rates implied by the coercivity constant; `eta_a` is clamped to `(0, 1]` first.
pub fn predicted_rates(eta_a: f64, c_p: f64, delta: f64, dim: usize, c_f: f64, sup_m: f64) -> Result<PredictedRates> {
    if !(eta_a > 0.0) {
        return Err(Error::StabilityViolated { eta: eta_a });
    }
    let eta = eta_a.min(1.0);
    let sigma = eta / (32.0 * c_p);
    let n1 = dim as f64 + 1.0;
    let theta_cap = (eta / 16.0).min(eta / (16.0 * c_p * (c_f * sup_m + 1.25)));
    Ok(PredictedRates { sigma, sigma1: (sigma - delta) / n1, sigma2: (sigma + delta) / n1, theta_cap })
}

#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub c_p: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub eta_c: f64,
    pub eta_principal: f64,
    pub eta_principal_multiplicity: usize,
    pub ell: f64,
    pub delta: f64,
    pub dim: usize,
    pub c_f: f64,
    pub c_f_loc: f64,
    pub sup_m_bar: f64,
    pub sigma: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub theta_cap: Option<f64>,
    pub satisfied: bool,
    /// `eta_b - eta_a/C_P`, `eta_c - eta_b/sup m`, `eta_a - eta_c/(eta_c + C_f,loc)` when `eta_a > 0`.
    pub chain_slack: Option<[f64; 3]>,
}

impl StabilityReport {
    pub fn rates(&self) -> Option<PredictedRates> {
        Some(PredictedRates {
            sigma: self.sigma?,
            sigma1: self.sigma1?,
            sigma2: self.sigma2?,
            theta_cap: self.theta_cap?,
        })
    }
}

/// All constants of the stability condition for one equilibrium.
pub fn analyze(sol: &StationarySolution, model: &CouplingModel, delta: f64) -> Result<StabilityReport> {
    let m_bar = &sol.m_bar;
    let forms = Forms::new(m_bar, model, delta)?;
    let c_p = poincare_constant(m_bar)?;
    let eta = |form| forms.pencil(&forms.numerator, form).map(|(v, _)| v[0]);
    let (eta_a, eta_b, eta_c) = (eta(EtaForm::A)?, eta(EtaForm::B)?, eta(EtaForm::C)?);
    let pair = principal_eigenpair(sol, model, delta)?;
    let c_f = model.c_f();
    let c_f_loc = model.local_c_f(m_bar);
    let sup_m = m_bar.max();
    let dim = m_bar.grid().dim();
    let rates = predicted_rates(eta_a, c_p, delta, dim, c_f, sup_m).ok();
    let chain_slack =
        (eta_a > 0.0).then(|| [eta_b - eta_a / c_p, eta_c - eta_b / sup_m, eta_a - eta_c / (eta_c + c_f_loc)]);
    Ok(StabilityReport {
        c_p,
        eta_a,
        eta_b,
        eta_c,
        eta_principal: pair.eta1,
        eta_principal_multiplicity: pair.multiplicity,
        ell: pair.ell,
        delta,
        dim,
        c_f,
        c_f_loc,
        sup_m_bar: sup_m,
        sigma: rates.map(|r| r.sigma),
        sigma1: rates.map(|r| r.sigma1),
        sigma2: rates.map(|r| r.sigma2),
        theta_cap: rates.map(|r| r.theta_cap),
        satisfied: eta_a > 0.0,
        chain_slack,
    })
}

/// Stationary solution with a prescribed density and the potential `-log m_bar`, for analysis of given states.
pub fn solution_from_density(m_bar: &ScalarField, delta: f64) -> Result<StationarySolution> {
    check_positive(m_bar)?;
    let u_bar = m_bar.map(|m| -m.ln());
    Ok(StationarySolution {
        u_bar,
        m_bar: m_bar.clone(),
        lambda: 0.0,
        delta,
        residual_hjb: f64::NAN,
        residual_fp: 0.0,
        residual_ansatz: 0.0,
        iterations: 0,
        energy_trace: Vec::new(),
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use std::f64::consts::PI;

    fn uniform(n: usize, length: f64) -> ScalarField {
        let g = PeriodicGrid::new(1, n, length).unwrap();
        ScalarField::constant(g, 1.0 / length)
    }

    #[test]
    fn poincare_constant_fourier_values() {
        let c = poincare_constant(&uniform(128, 1.0)).unwrap();
        assert!((c * 4.0 * PI * PI - 1.0).abs() < 0.01);
        let c2 = poincare_constant(&uniform(128, 2.0)).unwrap();
        assert!((c2 * PI * PI - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_model_forms() {
        let m = uniform(64, 1.0);
        let sol = solution_from_density(&m, 0.0).unwrap();
        let zero = CouplingModel::zero();
        assert!((eta_form(&sol, &zero, 0.0, EtaForm::A).unwrap() - 1.0).abs() < 1e-9);
        let pair = principal_eigenpair(&sol, &zero, 0.0).unwrap();
        let first = 4.0 * PI * PI;
        assert!((pair.eta1 / first - 1.0).abs() < 0.01);
        assert!(pair.ell.abs() < 1e-8);
        assert!(pair.residual_second < 1e-10);
        assert_eq!(pair.multiplicity, 2);
    }

    #[test]
    fn linear_model_eta_c() {
        let m = uniform(128, 1.0);
        let sol = solution_from_density(&m, 0.0).unwrap();
        for c in [0.5, 2.0] {
            let model = CouplingModel::linear(c).unwrap();
            let eta_c = eta_form(&sol, &model, 0.0, EtaForm::C).unwrap();
            assert!((eta_c / (c + 4.0 * PI * PI) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn predicted_rates_arithmetic() {
        let c_p = 1.0 / (4.0 * PI * PI);
        let r = predicted_rates(1.0, c_p, 0.0, 1, 0.0, 1.0).unwrap();
        assert!((r.sigma - PI * PI / 8.0).abs() < 1e-14);
        assert!((r.sigma1 - PI * PI / 16.0).abs() < 1e-14);
        assert_eq!(r.sigma1, r.sigma2);
        assert_eq!(r.theta_cap, (1.0f64 / 16.0).min(1.0 / (16.0 * c_p * 1.25)));
        let at_boundary = predicted_rates(1.0, c_p, r.sigma, 1, 0.0, 1.0).unwrap();
        assert_eq!(at_boundary.sigma1, 0.0);
        assert!(matches!(predicted_rates(-0.1, c_p, 0.0, 1, 0.0, 1.0), Err(Error::StabilityViolated { .. })));
        let clamped = predicted_rates(3.0, c_p, 0.0, 1, 0.0, 1.0).unwrap();
        assert_eq!(clamped.sigma, r.sigma);
    }
}
