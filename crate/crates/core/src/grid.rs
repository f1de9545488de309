//! Uniform periodic grids on the flat torus and the fields sampled on them.
//!
//! Cells are indexed row-major with the x axis fastest: `idx = j * n + i`.
//! Cell `i` has its center at `(i + 1/2) h`. The face attached to cell `i`
//! along an axis is the one at `i + 1/2`, shared with the next cell.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point on the torus; the second coordinate is ignored when `dim == 1`.
pub type Point = [f64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    n: usize,
    length: f64,
}

impl PeriodicGrid {
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Usage(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 {
            return Err(Error::Domain(format!("need at least 8 points per axis, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Domain(format!("torus length must be positive, got {length}")));
        }
        Ok(Self { dim, n, length })
    }

    /// One-dimensional unit torus with `n` cells.
    pub fn unit(n: usize) -> Result<Self> {
        Self::new(1, n, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn h(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Quadrature weight of one cell, `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.dim as i32)
    }

    /// Total measure of the torus, `length^dim`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    pub fn coords(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx % self.n, idx / self.n]
        }
    }

    pub fn index(&self, coords: [usize; 2]) -> usize {
        if self.dim == 1 {
            coords[0] % self.n
        } else {
            (coords[1] % self.n) * self.n + coords[0] % self.n
        }
    }

    /// Neighbor of `idx` along `axis`, wrapping periodically.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut c = self.coords(idx);
        let n = self.n as isize;
        c[axis] = (c[axis] as isize + offset).rem_euclid(n) as usize;
        self.index(c)
    }

    pub fn center(&self, idx: usize) -> Point {
        let h = self.h();
        let c = self.coords(idx);
        let y = if self.dim == 2 { (c[1] as f64 + 0.5) * h } else { 0.0 };
        [(c[0] as f64 + 0.5) * h, y]
    }

    /// Index of the cell containing `x` (coordinates taken modulo the torus).
    pub fn locate(&self, x: Point) -> usize {
        let h = self.h();
        let cell = |v: f64| ((v.rem_euclid(self.length) / h).floor() as usize).min(self.n - 1);
        if self.dim == 1 {
            cell(x[0])
        } else {
            self.index([cell(x[0]), cell(x[1])])
        }
    }

    pub(crate) fn check_same(&self, other: &PeriodicGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::Contract(format!("grid mismatch: {self:?} vs {other:?}")))
        }
    }
}

/// Cell-centered samples of a real function.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Contract(format!(
                "field has {} values, grid has {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite value {} at cell {i}", values[i])));
        }
        Ok(Self { grid, values })
    }

    /// Construction without the finiteness scan, for kernels that check their own output.
    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cell_count());
        Self { grid, values }
    }

    pub fn from_fn(grid: PeriodicGrid, f: impl Fn(Point) -> f64) -> Result<Self> {
        let values = (0..grid.cell_count()).map(|i| f(grid.center(i))).collect();
        Self::new(grid, values)
    }

    pub fn constant(grid: PeriodicGrid, c: f64) -> Self {
        Self::from_raw(grid, vec![c; grid.cell_count()])
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Midpoint-rule integral over the torus.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / self.grid.volume()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// L2 inner product with midpoint quadrature.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 48);
        if self.grid.dim == 1 {
            out.push_str("x,value\n");
        } else {
            out.push_str("x,y,value\n");
        }
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.center(i);
            if self.grid.dim == 1 {
                let _ = writeln!(out, "{},{}", fmt17(c[0]), fmt17(*v));
            } else {
                let _ = writeln!(out, "{},{},{}", fmt17(c[0]), fmt17(c[1]), fmt17(*v));
            }
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    /// Parses the `x,value` / `x,y,value` layout written by [`ScalarField::to_csv_string`].
    /// Only the value column is used; rows must follow the grid's cell order.
    pub fn from_csv_str(grid: PeriodicGrid, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("empty field file".into()))?;
        let expected = if grid.dim == 1 { "x,value" } else { "x,y,value" };
        if header.trim() != expected {
            return Err(Error::Config(format!("field header must be `{expected}`, got `{header}`")));
        }
        let mut values = Vec::with_capacity(grid.cell_count());
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let last = line.rsplit(',').next().unwrap_or("");
            let v: f64 = last
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("line {}: cannot parse value `{last}`", lineno + 2)))?;
            values.push(v);
        }
        Self::new(grid, values)
    }

    pub fn read_csv(grid: PeriodicGrid, path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(grid, &std::fs::read_to_string(path)?)
    }
}

/// Face-centered samples: one value per oriented face per axis.
///
/// Layout is axis-major: entry `axis * cells + i` is the face at `i + 1/2` along `axis`.
#[derive(Clone, Debug, PartialEq)]
pub struct FacetField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl FacetField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        let expected = grid.dim() * grid.cell_count();
        if values.len() != expected {
            return Err(Error::Contract(format!("facet field has {} values, expected {expected}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite facet value".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: PeriodicGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.dim() * grid.cell_count());
        Self { grid, values }
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.dim() * grid.cell_count()])
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, axis: usize, idx: usize) -> f64 {
        self.values[axis * self.grid.cell_count() + idx]
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::from_raw(self.grid, self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    /// `sum over faces of value * h^dim`, the midpoint rule for face quantities.
    pub fn integral(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    /// Conservative divergence: `(F_{i+1/2} - F_{i-1/2}) / h` summed over axes.
    pub fn div(&self) -> ScalarField {
        let g = self.grid;
        let cells = g.cell_count();
        let h = g.h();
        let mut out = vec![0.0; cells];
        for axis in 0..g.dim() {
            let face = &self.values[axis * cells..(axis + 1) * cells];
            for (i, o) in out.iter_mut().enumerate() {
                let left = g.neighbor(i, axis, -1);
                *o += (face[i] - face[left]) / h;
            }
        }
        ScalarField::from_raw(g, out)
    }

    /// Pointwise squared magnitude summed over axes, kept on faces.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Formats with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
