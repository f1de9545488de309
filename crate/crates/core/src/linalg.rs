//! Sparse stencil matrices, implicit solves and dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{FacetField, PeriodicGrid, ScalarField};
use crate::operators::{check_positive, drift, face_mean_harm};

/// A nearest-neighbor periodic operator: one diagonal plus a left and right
/// coefficient per axis for every row.
#[derive(Clone, Debug, PartialEq)]
pub struct Stencil {
    grid: PeriodicGrid,
    diag: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Stencil {
    pub fn zeros(grid: PeriodicGrid) -> Self {
        let cells = grid.cell_count();
        Self { grid, diag: vec![0.0; cells], lo: vec![0.0; grid.dim() * cells], hi: vec![0.0; grid.dim() * cells] }
    }

    pub fn identity(grid: PeriodicGrid) -> Self {
        let mut s = Self::zeros(grid);
        s.diag.iter_mut().for_each(|d| *d = 1.0);
        s
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    /// `f -> Div(c Grad f)` for face coefficients `c`.
    pub fn diffusion(coef: &FacetField) -> Self {
        let g = *coef.grid();
        let cells = g.cell_count();
        let h2 = g.h() * g.h();
        let mut s = Self::zeros(g);
        for axis in 0..g.dim() {
            for i in 0..cells {
                let right = coef.get(axis, i) / h2;
                let left = coef.get(axis, g.neighbor(i, axis, -1)) / h2;
                s.hi[axis * cells + i] += right;
                s.lo[axis * cells + i] += left;
                s.diag[i] -= right + left;
            }
        }
        s
    }

    /// `f -> Div(mean(f) d)` for face velocities `d`, with the arithmetic face mean.
    pub fn advection(vel: &FacetField) -> Self {
        let g = *vel.grid();
        let cells = g.cell_count();
        let h2 = 2.0 * g.h();
        let mut s = Self::zeros(g);
        for axis in 0..g.dim() {
            for i in 0..cells {
                let right = vel.get(axis, i) / h2;
                let left = vel.get(axis, g.neighbor(i, axis, -1)) / h2;
                s.hi[axis * cells + i] += right;
                s.lo[axis * cells + i] -= left;
                s.diag[i] += right - left;
            }
        }
        s
    }

    /// Stencil of `A` for the stationary density `m_bar`.
    pub fn a_operator(m_bar: &ScalarField) -> Result<Self> {
        let g = *m_bar.grid();
        let ones = FacetField::from_raw(g, vec![1.0; g.dim() * g.cell_count()]);
        Self::diffusion(&ones).add(&Self::advection(&drift(m_bar)?))
    }

    /// Stencil of `A*`.
    pub fn astar_operator(m_bar: &ScalarField) -> Result<Self> {
        check_positive(m_bar)?;
        let inv: Vec<f64> = m_bar.values().iter().map(|m| 1.0 / m).collect();
        Ok(Self::diffusion(&face_mean_harm(m_bar)).scale_rows(&inv))
    }

    /// Stencil of `BB*`.
    pub fn bbstar_operator(m_bar: &ScalarField) -> Result<Self> {
        check_positive(m_bar)?;
        Ok(Self::diffusion(&face_mean_harm(m_bar)).scale(-1.0))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let zip = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect();
        Ok(Self {
            grid: self.grid,
            diag: zip(&self.diag, &other.diag),
            lo: zip(&self.lo, &other.lo),
            hi: zip(&self.hi, &other.hi),
        })
    }

    pub fn scale(&self, c: f64) -> Self {
        let sc = |a: &[f64]| a.iter().map(|x| c * x).collect();
        Self { grid: self.grid, diag: sc(&self.diag), lo: sc(&self.lo), hi: sc(&self.hi) }
    }

    /// Left-multiplies by `diag(w)`.
    pub fn scale_rows(&self, w: &[f64]) -> Self {
        let cells = self.grid.cell_count();
        let mut s = self.clone();
        for (i, wi) in w.iter().enumerate().take(cells) {
            s.diag[i] *= wi;
            for axis in 0..self.grid.dim() {
                s.lo[axis * cells + i] *= wi;
                s.hi[axis * cells + i] *= wi;
            }
        }
        s
    }

    /// Right-multiplies by `diag(w)`.
    pub fn scale_cols(&self, w: &[f64]) -> Self {
        let g = self.grid;
        let cells = g.cell_count();
        let mut s = self.clone();
        for i in 0..cells {
            s.diag[i] *= w[i];
            for axis in 0..g.dim() {
                s.lo[axis * cells + i] *= w[g.neighbor(i, axis, -1)];
                s.hi[axis * cells + i] *= w[g.neighbor(i, axis, 1)];
            }
        }
        s
    }

    pub fn add_diag(&self, d: &[f64]) -> Self {
        let mut s = self.clone();
        s.diag.iter_mut().zip(d).for_each(|(a, b)| *a += b);
        s
    }

    /// `I + c * self`.
    pub fn shifted_identity(&self, c: f64) -> Self {
        let mut s = self.scale(c);
        s.diag.iter_mut().for_each(|d| *d += 1.0);
        s
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let g = self.grid;
        let cells = g.cell_count();
        let mut out: Vec<f64> = self.diag.iter().zip(x).map(|(d, v)| d * v).collect();
        for axis in 0..g.dim() {
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.lo[axis * cells + i] * x[g.neighbor(i, axis, -1)]
                    + self.hi[axis * cells + i] * x[g.neighbor(i, axis, 1)];
            }
        }
        out
    }

    pub fn apply_field(&self, f: &ScalarField) -> Result<ScalarField> {
        self.grid.check_same(f.grid())?;
        Ok(ScalarField::from_raw(self.grid, self.apply(f.values())))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let g = self.grid;
        let cells = g.cell_count();
        let mut m = DMatrix::zeros(cells, cells);
        for i in 0..cells {
            m[(i, i)] += self.diag[i];
            for axis in 0..g.dim() {
                m[(i, g.neighbor(i, axis, -1))] += self.lo[axis * cells + i];
                m[(i, g.neighbor(i, axis, 1))] += self.hi[axis * cells + i];
            }
        }
        m
    }

    /// Prefactors the matrix for repeated solves.
    pub fn factor(&self) -> Result<Factored> {
        if self.grid.dim() == 1 {
            Ok(Factored::Cyclic(CyclicTridiagonal::new(self.lo.clone(), self.diag.clone(), self.hi.clone())?))
        } else {
            let lu = self.to_dense().lu();
            if !lu.is_invertible() {
                return Err(Error::Numeric("singular implicit step matrix".into()));
            }
            Ok(Factored::Dense(lu))
        }
    }
}

pub enum Factored {
    Cyclic(CyclicTridiagonal),
    Dense(nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl Factored {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let x = match self {
            Self::Cyclic(c) => c.solve(rhs),
            Self::Dense(lu) => lu
                .solve(&DVector::from_column_slice(rhs))
                .ok_or_else(|| Error::Numeric("dense solve failed".into()))?
                .as_slice()
                .to_vec(),
        };
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in implicit solve".into()));
        }
        Ok(x)
    }
}

/// Periodic tridiagonal solver (Sherman-Morrison correction of the Thomas algorithm).
///
/// Row `i` reads `lo[i] x[i-1] + diag[i] x[i] + hi[i] x[i+1] = r[i]` with wrap-around.
pub struct CyclicTridiagonal {
    lo: Vec<f64>,
    // Thomas factors of the modified matrix.
    cp: Vec<f64>,
    denom: Vec<f64>,
    z: Vec<f64>,
    gamma: f64,
    corner_top: f64,
    z_dot: f64,
}

impl CyclicTridiagonal {
    pub fn new(lo: Vec<f64>, diag: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = diag.len();
        if n < 3 {
            return Err(Error::Contract("cyclic solver needs at least 3 rows".into()));
        }
        let corner_top = lo[0];
        let corner_bottom = hi[n - 1];
        let gamma = -diag[0];
        if gamma == 0.0 {
            return Err(Error::Numeric("zero pivot in cyclic solver".into()));
        }
        let mut b = diag;
        b[0] -= gamma;
        b[n - 1] -= corner_bottom * corner_top / gamma;
        let mut cp = vec![0.0; n];
        let mut denom = vec![0.0; n];
        for i in 0..n {
            let d = if i == 0 { b[0] } else { b[i] - lo[i] * cp[i - 1] };
            if d == 0.0 || !d.is_finite() {
                return Err(Error::Numeric("zero pivot in cyclic solver".into()));
            }
            denom[i] = d;
            cp[i] = hi[i] / d;
        }
        let mut s = Self { lo, cp, denom, z: Vec::new(), gamma, corner_top, z_dot: 0.0 };
        let mut u = vec![0.0; n];
        u[0] = gamma;
        u[n - 1] = corner_bottom;
        s.z = s.thomas(&u);
        s.z_dot = 1.0 + s.z[0] + corner_top * s.z[n - 1] / gamma;
        if s.z_dot == 0.0 {
            return Err(Error::Numeric("singular cyclic system".into()));
        }
        Ok(s)
    }

    fn thomas(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut x = vec![0.0; n];
        x[0] = r[0] / self.denom[0];
        for i in 1..n {
            x[i] = (r[i] - self.lo[i] * x[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cp[i] * x[i + 1];
        }
        x
    }

    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let mut x = self.thomas(r);
        let fact = (x[0] + self.corner_top * x[n - 1] / self.gamma) / self.z_dot;
        for (xi, zi) in x.iter_mut().zip(&self.z) {
            *xi -= fact * zi;
        }
        x
    }
}

/// Orthonormal basis (columns) of the complement of `w` in `R^n`.
pub fn complement_basis(w: &[f64]) -> DMatrix<f64> {
    let n = w.len();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let q = DVector::from_iterator(n, w.iter().map(|v| v / norm));
    // Householder reflector mapping q to +-e_0; its remaining columns span q's complement.
    let sign = if q[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut u = q.clone();
    u[0] += sign;
    let unorm2 = u.norm_squared();
    let mut h = DMatrix::identity(n, n);
    h -= (&u * u.transpose()) * (2.0 / unorm2);
    h.columns(1, n - 1).into_owned()
}

/// Eigenvalues (ascending) and eigenvectors of the symmetric-definite pencil `K x = theta B x`.
pub fn symmetric_pencil(k: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = nalgebra::Cholesky::new(symmetrize(b))
        .ok_or_else(|| Error::Invariant("pencil denominator is not positive definite".into()))?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
    let c = symmetrize(&(&linv * symmetrize(k) * linv.transpose()));
    let eig = nalgebra::SymmetricEigen::new(c);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let linvt = linv.transpose();
    let mut vecs = DMatrix::zeros(k.nrows(), order.len());
    for (j, &i) in order.iter().enumerate() {
        vecs.set_column(j, &(&linvt * eig.eigenvectors.column(i)));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("symmetric eigensolver returned non-finite values".into()));
    }
    Ok((values, vecs))
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{apply_a, apply_astar, apply_bbstar};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_field(g: PeriodicGrid, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ScalarField {
        ScalarField::new(g, (0..g.cell_count()).map(|_| rng.gen_range(lo..hi)).collect()).unwrap()
    }

    #[test]
    fn stencils_match_flux_operators() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1, 2] {
            let g = PeriodicGrid::new(dim, 12, 1.3).unwrap();
            let m = rand_field(g, &mut rng, 0.2, 2.0);
            let f = rand_field(g, &mut rng, -1.0, 1.0);
            let pairs = [
                (Stencil::a_operator(&m).unwrap(), apply_a(&m, &f).unwrap()),
                (Stencil::astar_operator(&m).unwrap(), apply_astar(&m, &f).unwrap()),
                (Stencil::bbstar_operator(&m).unwrap(), apply_bbstar(&m, &f).unwrap()),
            ];
            for (s, expected) in pairs {
                let got = s.apply_field(&f).unwrap();
                let err = got.sub(&expected).unwrap().sup_norm();
                assert!(err <= 1e-12 * expected.sup_norm().max(1.0), "err {err}");
                let dense = s.to_dense() * DVector::from_column_slice(f.values());
                assert!(
                    (dense - DVector::from_column_slice(got.values())).amax() <= 1e-12 * expected.sup_norm().max(1.0)
                );
            }
        }
    }

    #[test]
    fn cyclic_solver_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = PeriodicGrid::unit(17).unwrap();
        let m = rand_field(g, &mut rng, 0.3, 2.0);
        let s = Stencil::a_operator(&m).unwrap().shifted_identity(-1e-3);
        let r: Vec<f64> = (0..17).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x = s.factor().unwrap().solve(&r).unwrap();
        let back = s.apply(&x);
        for (a, b) in back.iter().zip(&r) {
            assert!((a - b).abs() < 1e-12);
        }
        let g2 = PeriodicGrid::new(2, 8, 1.0).unwrap();
        let m2 = rand_field(g2, &mut rng, 0.3, 2.0);
        let s2 = Stencil::astar_operator(&m2).unwrap().shifted_identity(-1e-2);
        let r2: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x2 = s2.factor().unwrap().solve(&r2).unwrap();
        for (a, b) in s2.apply(&x2).iter().zip(&r2) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn complement_basis_is_orthonormal() {
        let w = [0.3, 1.2, 0.5, 0.9, 2.0];
        let p = complement_basis(&w);
        let wt = DVector::from_column_slice(&w);
        assert!((p.transpose() * &p - DMatrix::identity(4, 4)).amax() < 1e-14);
        assert!((p.transpose() * wt).amax() < 1e-14);
    }

    #[test]
    fn pencil_solves_generalized_problem() {
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = symmetric_pencil(&k, &b).unwrap();
        for (j, val) in vals.iter().enumerate() {
            let x = vecs.column(j);
            let r = &k * x - (&b * x) * *val;
            assert!(r.amax() < 1e-12);
        }
        assert!(vals[0] <= vals[1]);
    }
}
