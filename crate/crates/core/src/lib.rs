//! Stationary mean-field-game equilibria on the flat torus, spectral
//! certificates of their local stability, and long-horizon turnpike checks.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod coupling;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod expr;
pub mod grid;
pub mod heat_kernel;
pub mod linalg;
pub mod linearized;
pub mod operators;
pub mod quadrature;
pub mod selftest;
pub mod stability;
pub mod stationary;
pub mod svg;

pub use error::{Error, Result};
pub use grid::{FacetField, PeriodicGrid, Point, ScalarField};
