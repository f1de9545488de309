//! Dense linearization around a stationary state: operator identities, spectrum and the linear two-point problem.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};
use crate::linalg::{complement_basis, max_abs, Stencil};
use crate::stationary::StationarySolution;

/// Largest cell count for dense eigensolves.
pub const MAX_DENSE_CELLS: usize = 256;

/// Relative tolerance of the exact matrix identities.
const IDENTITY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct LinearizedSystem {
    pub grid: PeriodicGrid,
    pub delta: f64,
    pub m_bar: ScalarField,
    pub a: DMatrix<f64>,
    pub a_star: DMatrix<f64>,
    pub bb_star: DMatrix<f64>,
    /// Multiplication by `f_m(x, m_bar)`.
    pub q: DMatrix<f64>,
    /// Multiplication by `m_bar`.
    pub t_mbar: DMatrix<f64>,
    /// `[[A - delta/2, -BB*], [-Q, -A* + delta/2]]`.
    pub m: DMatrix<f64>,
    /// Relative defects of the identities checked on assembly.
    pub identity_errors: IdentityErrors,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityErrors {
    pub bbstar_symmetry: f64,
    /// `BB* + A T_mbar`.
    pub left_factorization: f64,
    /// `BB* + T_mbar A*`.
    pub right_factorization: f64,
    /// `BB* A* - A BB*`.
    pub intertwining: f64,
}

impl IdentityErrors {
    pub fn max(&self) -> f64 {
        self.bbstar_symmetry.max(self.left_factorization).max(self.right_factorization).max(self.intertwining)
    }
}

fn relative_defect(lhs: &DMatrix<f64>, rhs: &DMatrix<f64>) -> f64 {
    let scale = max_abs(lhs).max(max_abs(rhs)).max(f64::MIN_POSITIVE);
    max_abs(&(lhs - rhs)) / scale
}

/// Builds the dense operators and checks the factorization and intertwining identities.
pub fn assemble(sol: &StationarySolution, model: &CouplingModel, delta: f64) -> Result<LinearizedSystem> {
    let m_bar = &sol.m_bar;
    let grid = *m_bar.grid();
    let n = grid.cell_count();
    if n > MAX_DENSE_CELLS {
        return Err(Error::Domain(format!("dense linearization supports at most {MAX_DENSE_CELLS} cells, got {n}")));
    }
    let a = Stencil::a_operator(m_bar)?.to_dense();
    let a_star = Stencil::astar_operator(m_bar)?.to_dense();
    let bb_star = Stencil::bbstar_operator(m_bar)?.to_dense();
    let q = DMatrix::from_diagonal(&DVector::from_vec(model.deriv_m_field(m_bar).into_values()));
    let t_mbar = DMatrix::from_diagonal(&DVector::from_column_slice(m_bar.values()));

    let identity_errors = IdentityErrors {
        bbstar_symmetry: relative_defect(&bb_star, &bb_star.transpose()),
        left_factorization: relative_defect(&bb_star, &(-(&a * &t_mbar))),
        right_factorization: relative_defect(&bb_star, &(-(&t_mbar * &a_star))),
        intertwining: relative_defect(&(&bb_star * &a_star), &(&a * &bb_star)),
    };
    if identity_errors.max() > IDENTITY_TOL {
        return Err(Error::Invariant(format!("linearized operator identities violated: {identity_errors:?}")));
    }

    let eye = DMatrix::<f64>::identity(n, n);
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    m.view_mut((0, 0), (n, n)).copy_from(&(&a - &eye * (delta / 2.0)));
    m.view_mut((0, n), (n, n)).copy_from(&(-&bb_star));
    m.view_mut((n, 0), (n, n)).copy_from(&(-&q));
    m.view_mut((n, n), (n, n)).copy_from(&(-&a_star + &eye * (delta / 2.0)));
    Ok(LinearizedSystem { grid, delta, m_bar: m_bar.clone(), a, a_star, bb_star, q, t_mbar, m, identity_errors })
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicityReport {
    /// Spectrum after removing zero-mass densities and constant values.
    pub spectrum: Vec<(f64, f64)>,
    pub raw_spectrum: Vec<(f64, f64)>,
    pub min_abs_real_part: f64,
    /// Largest distance of the spectrum from its images under `z -> -z` and `z -> conj(z)`.
    pub quadruple_error: f64,
    pub deflation: &'static str,
}

pub const DEFLATION_NOTE: &str =
    "densities restricted to zero mass; values taken modulo constants and represented with zero m_bar-weighted mean";

fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let vals = m.complex_eigenvalues();
    let mut out: Vec<(f64, f64)> = vals.iter().map(|z| (z.re, z.im)).collect();
    if out.iter().any(|(re, im)| !re.is_finite() || !im.is_finite()) {
        return Err(Error::Numeric("eigensolver returned non-finite values".into()));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(out)
}

fn quadruple_error(spectrum: &[(f64, f64)]) -> f64 {
    let nearest = |re: f64, im: f64| spectrum.iter().map(|(a, b)| (a - re).hypot(b - im)).fold(f64::INFINITY, f64::min);
    spectrum.iter().map(|&(re, im)| nearest(-re, im).max(nearest(re, -im))).fold(0.0, f64::max)
}

/// The matrix of `M` on the quotient that removes the two neutral directions.
pub fn deflated_matrix(sys: &LinearizedSystem) -> DMatrix<f64> {
    let n = sys.grid.cell_count();
    let ones = vec![1.0; n];
    let mass_free = complement_basis(&ones);
    let gauge_free = complement_basis(sys.m_bar.values());
    let total: f64 = sys.m_bar.values().iter().sum();
    // Projection along constants onto the zero weighted-mean subspace.
    let mbar = DVector::from_column_slice(sys.m_bar.values());
    let proj = DMatrix::<f64>::identity(n, n) - DVector::from_element(n, 1.0) * mbar.transpose() / total;
    let k = n - 1;
    let mut embed = DMatrix::zeros(2 * n, 2 * k);
    embed.view_mut((0, 0), (n, k)).copy_from(&mass_free);
    embed.view_mut((n, k), (n, k)).copy_from(&gauge_free);
    let mut restrict = DMatrix::zeros(2 * k, 2 * n);
    restrict.view_mut((0, 0), (k, n)).copy_from(&mass_free.transpose());
    restrict.view_mut((k, n), (k, n)).copy_from(&(gauge_free.transpose() * proj));
    restrict * &sys.m * embed
}

pub fn hyperbolicity_report(sys: &LinearizedSystem) -> Result<HyperbolicityReport> {
    let spectrum = eigenvalues(&deflated_matrix(sys))?;
    let raw_spectrum = eigenvalues(&sys.m)?;
    let min_abs_real_part = spectrum.iter().map(|(re, _)| re.abs()).fold(f64::INFINITY, f64::min);
    Ok(HyperbolicityReport {
        quadruple_error: quadruple_error(&spectrum),
        spectrum,
        raw_spectrum,
        min_abs_real_part,
        deflation: DEFLATION_NOTE,
    })
}

/// Paths of the linear two-point problem.
#[derive(Clone, Debug)]
pub struct LinearPaths {
    pub times: Vec<f64>,
    pub mu_path: Vec<ScalarField>,
    pub v_path: Vec<ScalarField>,
}

/// Solves the linearized system (undivided discount in the value equation) with the same
/// time stepping as the nonlinear solver:
///
/// ```text
/// (I - dt A) mu^{k+1} + dt BB* v^{k+1} = mu^k,    mu^0 = mu_0
/// (I - dt A* + dt delta) v^k - dt Q mu^k = v^{k+1}, v^K = v_T
/// ```
///
/// by a backward sweep for `v^k = X_k mu^k + y_k` followed by a forward pass.
pub fn solve_linear_tpbvp(
    sys: &LinearizedSystem,
    mu_initial: &ScalarField,
    v_terminal: &ScalarField,
    horizon: f64,
    n_steps: usize,
) -> Result<LinearPaths> {
    let grid = sys.grid;
    grid.check_same(mu_initial.grid())?;
    grid.check_same(v_terminal.grid())?;
    if n_steps == 0 || !(horizon > 0.0) {
        return Err(Error::Domain("need a positive horizon and at least one step".into()));
    }
    let mass = mu_initial.integral();
    if mass.abs() > 1e-12 * mu_initial.sup_norm().max(1.0) {
        return Err(Error::Domain(format!("initial perturbation must have zero mass, got {mass:.3e}")));
    }
    let n = grid.cell_count();
    let dt = horizon / n_steps as f64;
    let eye = DMatrix::<f64>::identity(n, n);
    let fp = &eye - &sys.a * dt;
    let value_step = (&eye - &sys.a_star * dt + &eye * (dt * sys.delta)).lu();
    let bb_dt = &sys.bb_star * dt;
    let q_dt = &sys.q * dt;

    let singular = |what: &str, mat: &DMatrix<f64>| {
        let cond = condition_estimate(mat);
        Error::Numeric(format!("singular {what} in the linear two-point solve (condition estimate {cond:.3e})"))
    };

    // Backward sweep: X_k, y_k and the forward factors G_k = (I - dt A + dt BB* X_{k+1})^{-1}.
    let mut x_next = DMatrix::<f64>::zeros(n, n);
    let mut y_next = DVector::from_column_slice(v_terminal.values());
    let mut forward = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let lhs = &fp + &bb_dt * &x_next;
        let g = lhs.clone().try_inverse().ok_or_else(|| singular("forward factor", &lhs))?;
        let xg = &x_next * &g;
        let x_k = value_step.solve(&(&xg + &q_dt)).ok_or_else(|| singular("value step", &(&eye - &sys.a_star * dt)))?;
        let y_k = value_step
            .solve(&(&y_next - &xg * (&bb_dt * &y_next)))
            .ok_or_else(|| singular("value step", &(&eye - &sys.a_star * dt)))?;
        forward.push((g, y_next));
        x_next = x_k;
        y_next = y_k;
    }
    forward.reverse();

    let mut mu = DVector::from_column_slice(mu_initial.values());
    let mut mu_path = Vec::with_capacity(n_steps + 1);
    let mut v_path = Vec::with_capacity(n_steps + 1);
    v_path.push(&x_next * &mu + &y_next);
    mu_path.push(mu.clone());
    for (g, y) in &forward {
        mu = g * (&mu - &bb_dt * y);
        mu_path.push(mu.clone());
    }
    // Recompute v forward from the stored affine maps to keep the last node pinned.
    let mut v_rev = Vec::with_capacity(n_steps);
    let mut v_later = DVector::from_column_slice(v_terminal.values());
    for k in (1..n_steps).rev() {
        let rhs = &v_later + &q_dt * &mu_path[k];
        let v_k = value_step.solve(&rhs).ok_or_else(|| singular("value step", &eye))?;
        v_rev.push(v_k.clone());
        v_later = v_k;
    }
    v_rev.reverse();
    v_path.extend(v_rev);
    v_path.push(DVector::from_column_slice(v_terminal.values()));

    let to_fields = |p: Vec<DVector<f64>>| {
        p.into_iter().map(|v| ScalarField::new(grid, v.as_slice().to_vec())).collect::<Result<Vec<_>>>()
    };
    Ok(LinearPaths {
        times: (0..=n_steps).map(|k| k as f64 * dt).collect(),
        mu_path: to_fields(mu_path)?,
        v_path: to_fields(v_path)?,
    })
}

/// Ratio of extreme singular values.
fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    max / min
}
