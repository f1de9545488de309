//! Stationary equilibria `(u, m)` built on the ansatz `m ∝ exp(-u)`.
//!
//! The discrete Hamilton-Jacobi operator is written through `phi = exp(-u/2)`:
//! `Δu - |Du|^2/2 := -2 Δ_h phi / phi`. This matches the Cole-Hopf form used by
//! the time-dependent solvers, and makes the ergodic problem a nonlinear
//! eigenvalue problem for `phi = sqrt(m)`.

use log::debug;
use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};
use crate::linalg::Stencil;
use crate::operators::{apply_a, drift, face_mean_arith, grad, laplacian};

#[derive(Clone, Debug)]
pub struct StationaryOptions {
    /// Stopping tolerance, also the target for the HJB residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial pseudo-time step of the gradient flow.
    pub initial_step: f64,
    /// Largest pseudo-time step the flow may grow to.
    pub max_step: f64,
    /// Relaxation of the fixed-point map in the discounted solver.
    pub damping: f64,
    /// Initial density; uniform when absent.
    pub init_m: Option<ScalarField>,
    /// Seed for a random initial density, used when `init_m` is absent.
    pub seed: Option<u64>,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 20_000, initial_step: 1.0, max_step: 1e4, damping: 0.5, init_m: None, seed: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StationaryReport {
    pub lambda: f64,
    pub delta: f64,
    pub residual_hjb: f64,
    pub residual_fp: f64,
    pub residual_ansatz: f64,
    pub iterations: usize,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct StationarySolution {
    pub u_bar: ScalarField,
    pub m_bar: ScalarField,
    /// Ergodic constant; zero when `delta > 0`.
    pub lambda: f64,
    pub delta: f64,
    pub residual_hjb: f64,
    pub residual_fp: f64,
    pub residual_ansatz: f64,
    pub iterations: usize,
    /// Static energy after each energy-decreasing gradient-flow step (ergodic solver only).
    pub energy_trace: Vec<f64>,
    pub seed: Option<u64>,
}

impl StationarySolution {
    pub fn grid(&self) -> &PeriodicGrid {
        self.m_bar.grid()
    }

    /// The coupling seen by downstream solvers: `f - lambda`.
    pub fn absorbed_model(&self, model: &CouplingModel) -> CouplingModel {
        model.shifted(self.lambda)
    }

    /// Recomputes all residuals against `model` (which must not yet absorb `lambda`).
    pub fn refresh_residuals(&mut self, model: &CouplingModel) -> Result<()> {
        let (hjb, fp, ans) = residuals(&self.u_bar, &self.m_bar, model, self.lambda, self.delta)?;
        self.residual_hjb = hjb;
        self.residual_fp = fp;
        self.residual_ansatz = ans;
        Ok(())
    }

    pub fn report(&self) -> StationaryReport {
        StationaryReport {
            lambda: self.lambda,
            delta: self.delta,
            residual_hjb: self.residual_hjb,
            residual_fp: self.residual_fp,
            residual_ansatz: self.residual_ansatz,
            iterations: self.iterations,
            seed: self.seed,
        }
    }

    /// `x, m_bar, u_bar` (or `x, y, m_bar, u_bar`) rows.
    pub fn to_csv_string(&self) -> String {
        let g = self.grid();
        let mut out = String::from(if g.dim() == 1 { "x,m_bar,u_bar\n" } else { "x,y,m_bar,u_bar\n" });
        for i in 0..g.cell_count() {
            let c = g.center(i);
            let m = crate::grid::fmt17(self.m_bar.values()[i]);
            let u = crate::grid::fmt17(self.u_bar.values()[i]);
            if g.dim() == 1 {
                out.push_str(&format!("{},{m},{u}\n", crate::grid::fmt17(c[0])));
            } else {
                out.push_str(&format!("{},{},{m},{u}\n", crate::grid::fmt17(c[0]), crate::grid::fmt17(c[1])));
            }
        }
        out
    }
}

/// Discrete `Δu - |Du|^2/2` in Cole-Hopf form.
pub fn hjb_operator(u: &ScalarField) -> ScalarField {
    let shift = u.min();
    let phi = u.map(|v| (-(v - shift) / 2.0).exp());
    let lap = laplacian(&phi);
    ScalarField::from_raw(*u.grid(), lap.values().iter().zip(phi.values()).map(|(l, p)| -2.0 * l / p).collect())
}

/// `(hjb, fp, ansatz)` residuals in sup norm.
pub fn residuals(
    u: &ScalarField,
    m: &ScalarField,
    model: &CouplingModel,
    lambda: f64,
    delta: f64,
) -> Result<(f64, f64, f64)> {
    let f = model.eval_field(m);
    let lhs = hjb_operator(u);
    let hjb = (0..u.len())
        .map(|i| (lhs.values()[i] + f.values()[i] - lambda - delta * u.values()[i]).abs())
        .fold(0.0, f64::max);
    let fp = apply_a(m, m)?.sup_norm();
    let ansatz = grad(m).add(&face_mean_arith(m).mul(&drift(m)?)?)?.sup_norm();
    Ok((hjb, fp, ansatz))
}

/// `F~(m) = int F(x, m) + 2 |D sqrt(m)|^2`.
pub fn static_energy(model: &CouplingModel, m: &ScalarField) -> Result<f64> {
    if m.min() < 0.0 {
        return Err(Error::Domain("static energy needs a nonnegative density".into()));
    }
    let phi = m.map(f64::sqrt);
    Ok(energy_of_phi(model, &phi))
}

fn energy_of_phi(model: &CouplingModel, phi: &ScalarField) -> f64 {
    let dphi = grad(phi);
    let kinetic = 2.0 * dphi.map(|d| d * d).integral();
    kinetic + model.primitive_field(&phi.map(|p| p * p)).integral()
}

fn normalize_phi(phi: &mut [f64], cell_volume: f64) {
    let norm = (cell_volume * phi.iter().map(|p| p * p).sum::<f64>()).sqrt();
    phi.iter_mut().for_each(|p| *p /= norm);
}

/// Potential `-log m` gauged so that `int u m = 0`.
fn gauged_potential(m: &ScalarField) -> ScalarField {
    let u = m.map(|v| -v.ln());
    let c = u.dot(m).expect("same grid") / m.integral();
    u.map(|v| v - c)
}

/// Ergodic problem (`delta = 0`) by a normalized gradient flow on `phi = sqrt(m)`.
/// `phi = 1`, or a seeded positive perturbation `1 + 0.2 U(-1, 1)` per cell.
fn initial_amplitude(grid: PeriodicGrid, seed: Option<u64>) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    match seed {
        Some(seed) => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..grid.cell_count()).map(|_| 1.0 + 0.2 * rng.gen_range(-1.0..1.0)).collect()
        }
        None => vec![1.0; grid.cell_count()],
    }
}

pub fn solve_stationary_ergodic(
    model: &CouplingModel,
    grid: PeriodicGrid,
    opts: &StationaryOptions,
) -> Result<StationarySolution> {
    let vol = grid.cell_volume();
    let mut phi: Vec<f64> = match &opts.init_m {
        Some(m0) => {
            grid.check_same(m0.grid())?;
            if m0.min() <= 0.0 {
                return Err(Error::Domain("initial density must be positive".into()));
            }
            m0.values().iter().map(|v| v.sqrt()).collect()
        }
        None => initial_amplitude(grid, opts.seed),
    };
    normalize_phi(&mut phi, vol);
    let lap = Stencil::diffusion(&crate::grid::FacetField::from_raw(grid, vec![1.0; grid.dim() * grid.cell_count()]));
    let mut field = ScalarField::from_raw(grid, phi);
    let mut energy = energy_of_phi(model, &field);
    let mut energy_trace = vec![energy];
    let mut step = opts.initial_step;
    let mut last_change = f64::INFINITY;

    for iter in 1..=opts.max_iter {
        // (I - 2 dt Δ + dt diag f(phi^2)) phi* = phi, then renormalize.
        let f = model.eval_field(&field.map(|p| p * p));
        let system = lap.scale(-2.0).add_diag(f.values()).shifted_identity(step);
        let candidate = system.factor().and_then(|lu| lu.solve(field.values()));
        let mut next = match candidate {
            Ok(v) if v.iter().all(|p| *p > 0.0) => v,
            _ => {
                step *= 0.5;
                if step < 1e-14 {
                    return Err(Error::Convergence {
                        context: "ergodic gradient flow lost positivity".into(),
                        iterations: iter,
                        residual: last_change,
                    });
                }
                continue;
            }
        };
        normalize_phi(&mut next, vol);
        let next = ScalarField::from_raw(grid, next);
        let change = next.sub(&field)?.sup_norm() / step;
        let next_energy = energy_of_phi(model, &next);
        // Near the minimum the energy is flat to rounding; such steps are taken but not traced.
        let noise = 1e-13 * energy.abs().max(1.0);
        if next_energy > energy + noise {
            step *= 0.5;
            if step < 1e-14 {
                return Err(Error::Convergence {
                    context: "ergodic gradient flow step underflow".into(),
                    iterations: iter,
                    residual: change,
                });
            }
            continue;
        }
        if next_energy >= energy && change <= opts.tol {
            let sol = finish_ergodic(model, field.clone(), iter, energy_trace.clone(), opts)?;
            if sol.residual_hjb <= opts.tol {
                return Ok(sol);
            }
        }
        field = next;
        if next_energy < energy {
            energy = next_energy;
            energy_trace.push(energy);
        }
        last_change = change;
        if change <= opts.tol {
            let sol = finish_ergodic(model, field.clone(), iter, energy_trace.clone(), opts)?;
            if sol.residual_hjb <= opts.tol {
                return Ok(sol);
            }
        }
        step = (step * 1.5).min(opts.max_step);
        if iter % 500 == 0 {
            debug!("ergodic flow iter {iter}: change {change:.3e}, step {step:.3e}");
        }
    }
    Err(Error::Convergence {
        context: "ergodic gradient flow".into(),
        iterations: opts.max_iter,
        residual: last_change,
    })
}

fn finish_ergodic(
    model: &CouplingModel,
    phi: ScalarField,
    iterations: usize,
    energy_trace: Vec<f64>,
    opts: &StationaryOptions,
) -> Result<StationarySolution> {
    let grid = *phi.grid();
    let m_raw = phi.map(|p| p * p);
    let mass = m_raw.integral();
    let m_bar = m_raw.scale(1.0 / mass);
    let u_bar = gauged_potential(&m_bar);
    let hjb = hjb_operator(&u_bar);
    let f = model.eval_field(&m_bar);
    // lambda = int (Δu - |Du|^2/2 + f) m
    let lambda = hjb.add(&f)?.dot(&m_bar)?;
    let mut sol = StationarySolution {
        u_bar,
        m_bar,
        lambda,
        delta: 0.0,
        residual_hjb: 0.0,
        residual_fp: 0.0,
        residual_ansatz: 0.0,
        iterations,
        energy_trace,
        seed: opts.seed,
    };
    debug_assert_eq!(*sol.grid(), grid);
    sol.refresh_residuals(model)?;
    Ok(sol)
}

/// Discounted problem (`delta > 0`) by a damped fixed point on `u`, each step solved by Newton.
pub fn solve_stationary_discounted(
    model: &CouplingModel,
    grid: PeriodicGrid,
    delta: f64,
    opts: &StationaryOptions,
) -> Result<StationarySolution> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::Domain(format!("discount must be positive, got {delta}")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Domain(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let mut u = match &opts.init_m {
        Some(m0) => {
            grid.check_same(m0.grid())?;
            if m0.min() <= 0.0 {
                return Err(Error::Domain("initial density must be positive".into()));
            }
            m0.map(|v| -v.ln())
        }
        None => ScalarField::zeros(grid),
    };
    let mut change = f64::INFINITY;
    for iter in 1..=opts.max_iter {
        let m = density_from_potential(&u);
        let source = model.eval_field(&m);
        let target = newton_discounted_hjb(&u, &source, delta, opts.tol * 1e-2)?;
        let next = u.zip_map(&target, |a, b| (1.0 - opts.damping) * a + opts.damping * b)?;
        change = next.sub(&u)?.sup_norm();
        u = next;
        if change <= opts.tol {
            let m_bar = density_from_potential(&u);
            let mut sol = StationarySolution {
                u_bar: u,
                m_bar,
                lambda: 0.0,
                delta,
                residual_hjb: 0.0,
                residual_fp: 0.0,
                residual_ansatz: 0.0,
                iterations: iter,
                energy_trace: Vec::new(),
                seed: opts.seed,
            };
            sol.refresh_residuals(model)?;
            return Ok(sol);
        }
    }
    Err(Error::Convergence {
        context: "discounted stationary fixed point".into(),
        iterations: opts.max_iter,
        residual: change,
    })
}

/// `exp(-u) / int exp(-u)`.
pub fn density_from_potential(u: &ScalarField) -> ScalarField {
    let shift = u.min();
    let raw = u.map(|v| (-(v - shift)).exp());
    let z = raw.integral();
    raw.scale(1.0 / z)
}

/// Solves `-2 Δphi/phi + source - delta u = 0` with `phi = exp(-u/2)` for `u`.
fn newton_discounted_hjb(u0: &ScalarField, source: &ScalarField, delta: f64, tol: f64) -> Result<ScalarField> {
    let grid = *u0.grid();
    let cells = grid.cell_count();
    let lap = Stencil::diffusion(&crate::grid::FacetField::from_raw(grid, vec![1.0; grid.dim() * cells]));
    let mut u = u0.clone();
    let mut res_norm = f64::INFINITY;
    for _ in 0..100 {
        let shift = u.min();
        let phi: Vec<f64> = u.values().iter().map(|v| (-(v - shift) / 2.0).exp()).collect();
        let lphi = lap.apply(&phi);
        let residual: Vec<f64> =
            (0..cells).map(|i| -2.0 * lphi[i] / phi[i] + source.values()[i] - delta * u.values()[i]).collect();
        res_norm = residual.iter().fold(0.0, |a, r| a.max(r.abs()));
        if res_norm <= tol {
            return Ok(u);
        }
        // J = T_phi^{-1} L T_phi - diag(L phi / phi) - delta I
        let inv_phi: Vec<f64> = phi.iter().map(|p| 1.0 / p).collect();
        let jac = lap
            .scale_cols(&phi)
            .scale_rows(&inv_phi)
            .add_diag(&(0..cells).map(|i| -lphi[i] / phi[i] - delta).collect::<Vec<_>>());
        let rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
        let du = jac.factor()?.solve(&rhs)?;
        u = ScalarField::new(grid, u.values().iter().zip(&du).map(|(a, b)| a + b).collect())?;
        let step = du.iter().fold(0.0, |a: f64, d| a.max(d.abs()));
        if step <= 1e-14 * (1.0 + u.sup_norm()) {
            return Ok(u);
        }
    }
    Err(Error::Convergence { context: "discounted HJB Newton solve".into(), iterations: 100, residual: res_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::check_positive;

    #[test]
    fn zero_coupling_gives_uniform_state() {
        let g = PeriodicGrid::unit(64).unwrap();
        let sol = solve_stationary_ergodic(&CouplingModel::zero(), g, &StationaryOptions::default()).unwrap();
        assert!(sol.m_bar.values().iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(sol.u_bar.sup_norm() < 1e-12);
        assert!(sol.lambda.abs() < 1e-12);
        assert!(sol.residual_hjb < 1e-12 && sol.residual_fp < 1e-12 && sol.residual_ansatz < 1e-12);
    }

    #[test]
    fn linear_coupling_constant_is_one() {
        let g = PeriodicGrid::unit(64).unwrap();
        let sol =
            solve_stationary_ergodic(&CouplingModel::linear(1.0).unwrap(), g, &StationaryOptions::default()).unwrap();
        assert!((sol.lambda - 1.0).abs() < 1e-9);
    }

    #[test]
    fn potential_equilibrium_is_normalized_and_consistent() {
        let g = PeriodicGrid::unit(64).unwrap();
        let model = CouplingModel::potential_plus_saturating(0.1, 0.0, 0.0).unwrap();
        let sol = solve_stationary_ergodic(&model, g, &StationaryOptions::default()).unwrap();
        check_positive(&sol.m_bar).unwrap();
        assert!((sol.m_bar.integral() - 1.0).abs() < 1e-12);
        assert!(sol.residual_hjb <= 1e-9);
        assert!(sol.residual_fp <= 1e-12);
        assert!(sol.m_bar.max() - sol.m_bar.min() > 1e-3);
        assert!(sol.u_bar.dot(&sol.m_bar).unwrap().abs() < 1e-12);
        for w in sol.energy_trace.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn discounted_constants() {
        let g = PeriodicGrid::unit(32).unwrap();
        let opts = StationaryOptions::default();
        let zero = solve_stationary_discounted(&CouplingModel::zero(), g, 0.1, &opts).unwrap();
        assert!(zero.u_bar.sup_norm() < 1e-10);
        let lin = solve_stationary_discounted(&CouplingModel::linear(1.0).unwrap(), g, 0.5, &opts).unwrap();
        assert!(lin.u_bar.values().iter().all(|u| (u - 2.0).abs() < 1e-8));
        assert!(lin.m_bar.values().iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(solve_stationary_discounted(&CouplingModel::zero(), g, 0.0, &opts).is_err());
    }

    #[test]
    fn discounted_nonuniform_residuals() {
        let g = PeriodicGrid::unit(64).unwrap();
        let model = CouplingModel::potential_plus_saturating(0.5, 0.3, 0.2).unwrap();
        let sol = solve_stationary_discounted(&model, g, 0.4, &StationaryOptions::default()).unwrap();
        assert!(sol.residual_hjb <= 1e-9, "{}", sol.residual_hjb);
        assert!(sol.residual_fp <= 1e-12);
    }
}
