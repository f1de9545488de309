//! Finite- and infinite-horizon solves of the perturbation system around a stationary state.
//!
//! With `v = u - u_bar` and `mu = m - m_bar` the system reads
//!
//! ```text
//! -dv/dt = A* v - H(v) + f(m_bar + nu rho) - f(m_bar) - delta v,   v(T) = nu v_T
//!  dmu/dt = A mu - BB* v + Div(mean(mu) Grad v),                   mu(0) = nu mu_0
//! ```
//!
//! where `A* v - H(v) = -(2/w) A* w` with `w = exp(-v/2)`. The fixed point
//! `rho = mu` is found by damped Picard iteration along a continuation in `nu`.

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::coupling::CouplingModel;
use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid, ScalarField};
use crate::linalg::Stencil;
use crate::operators::{face_mean_arith, grad};
use crate::stationary::StationarySolution;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BackwardScheme {
    /// Implicit step on `w = exp(-v/2)` with the bracket frozen at the later time level.
    #[default]
    ColeHopf,
    /// Implicit in `A* - delta`, explicit in the Hamiltonian remainder and coupling.
    SemiImplicit,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    /// Number of time steps; when absent, chosen so that `dt <= h^2 / 4`.
    pub n_steps: Option<usize>,
    pub damping: f64,
    pub nu_schedule: Vec<f64>,
    /// Tolerance on the change of the density iterate, in the weighted sup norm.
    pub tol: f64,
    pub max_outer: usize,
    pub backward_scheme: BackwardScheme,
    /// `(sigma1, sigma2)` for the weighted sup norm; plain sup norm when absent.
    pub envelope_rates: Option<(f64, f64)>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            n_steps: None,
            damping: 0.5,
            nu_schedule: vec![0.25, 0.5, 0.75, 1.0],
            tol: 1e-10,
            max_outer: 400,
            backward_scheme: BackwardScheme::ColeHopf,
            envelope_rates: None,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::Domain(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if self.nu_schedule.is_empty() || self.nu_schedule.last() != Some(&1.0) {
            return Err(Error::Domain("continuation schedule must end at 1".into()));
        }
        if self.nu_schedule.iter().any(|nu| !(0.0..=1.0).contains(nu)) {
            return Err(Error::Domain("continuation values must lie in [0, 1]".into()));
        }
        if self.nu_schedule.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Domain("continuation schedule must be nondecreasing".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Domain("tolerance must be positive".into()));
        }
        if self.n_steps == Some(0) {
            return Err(Error::Domain("need at least one time step".into()));
        }
        Ok(())
    }

    /// Number of steps for horizon `t_final` on `grid`.
    pub fn steps_for(&self, grid: &PeriodicGrid, t_final: f64) -> usize {
        let h = grid.h();
        let rule = (t_final / (h * h / 4.0)).ceil().max(1.0) as usize;
        match self.n_steps {
            Some(n) => {
                if t_final / n as f64 > h * h / 4.0 {
                    warn!("time step {:.3e} exceeds h^2/4 = {:.3e}", t_final / n as f64, h * h / 4.0);
                }
                n
            }
            None => rule,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub nu: f64,
    pub iteration: usize,
    pub damping: f64,
    pub change: f64,
}

#[derive(Clone, Debug)]
pub struct DynamicSolution {
    pub grid: PeriodicGrid,
    pub horizon: f64,
    pub n_steps: usize,
    pub delta: f64,
    pub times: Vec<f64>,
    pub mu_path: Vec<ScalarField>,
    pub v_path: Vec<ScalarField>,
    pub trace: Vec<TraceRecord>,
    /// Largest `|int mu(t)|` over all FP solves of the run.
    pub max_mass_error: f64,
    /// False when `m_bar + mu` became nonpositive somewhere.
    pub positivity_ok: bool,
}

impl DynamicSolution {
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn m_path(&self, sol: &StationarySolution) -> Vec<ScalarField> {
        self.mu_path.iter().map(|mu| mu.add(&sol.m_bar).expect("same grid")).collect()
    }

    pub fn u_path(&self, sol: &StationarySolution) -> Vec<ScalarField> {
        self.v_path.iter().map(|v| v.add(&sol.u_bar).expect("same grid")).collect()
    }

    /// Keeps the nodes with `t <= t_max`.
    pub fn truncated(&self, t_max: f64) -> Self {
        let keep = self.times.iter().take_while(|t| **t <= t_max + 1e-12 * self.horizon).count();
        let mut out = self.clone();
        out.times.truncate(keep);
        out.mu_path.truncate(keep);
        out.v_path.truncate(keep);
        out.n_steps = keep.saturating_sub(1);
        out.horizon = out.times.last().copied().unwrap_or(0.0);
        out
    }

    /// Rows are time nodes, columns are cells.
    pub fn path_csv(path: &[ScalarField], times: &[f64]) -> String {
        let mut out = String::from("t");
        if let Some(first) = path.first() {
            for i in 0..first.len() {
                out.push_str(&format!(",c{i}"));
            }
        }
        out.push('\n');
        for (t, f) in times.iter().zip(path) {
            out.push_str(&crate::grid::fmt17(*t));
            for v in f.values() {
                out.push(',');
                out.push_str(&crate::grid::fmt17(*v));
            }
            out.push('\n');
        }
        out
    }
}

/// Operators shared by every sweep of one run.
struct Kernel {
    astar: Stencil,
    bbstar: Stencil,
    fp_step: crate::linalg::Factored,
    dt: f64,
}

impl Kernel {
    fn new(sol: &StationarySolution, dt: f64) -> Result<Self> {
        let m_bar = &sol.m_bar;
        let a = Stencil::a_operator(m_bar)?;
        Ok(Self {
            astar: Stencil::astar_operator(m_bar)?,
            bbstar: Stencil::bbstar_operator(m_bar)?,
            fp_step: a.shifted_identity(-dt).factor()?,
            dt,
        })
    }
}

/// `H(v) = A* v + (2/w) A* w`, the discrete `|Dv|^2 / 2`.
pub fn hamiltonian_remainder(m_bar: &ScalarField, v: &ScalarField) -> Result<ScalarField> {
    let astar = Stencil::astar_operator(m_bar)?;
    Ok(ScalarField::from_raw(*v.grid(), remainder_with(&astar, v.values())))
}

fn remainder_with(astar: &Stencil, v: &[f64]) -> Vec<f64> {
    let shift = v.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = v.iter().map(|x| (-(x - shift) / 2.0).exp()).collect();
    let aw = astar.apply(&w);
    let av = astar.apply(v);
    (0..v.len()).map(|i| av[i] + 2.0 * aw[i] / w[i]).collect()
}

fn coupling_increment(model: &CouplingModel, m_bar: &ScalarField, rho: &ScalarField, nu: f64) -> Vec<f64> {
    let g = m_bar.grid();
    (0..g.cell_count())
        .map(|i| {
            let x = g.center(i);
            let m = m_bar.values()[i];
            model.eval(x, m + nu * rho.values()[i]) - model.eval(x, m)
        })
        .collect()
}

/// Backward march of the HJB perturbation equation from `v(T) = v_T`.
#[allow(clippy::too_many_arguments)]
pub fn solve_hjb_backward(
    rho_path: &[ScalarField],
    nu: f64,
    v_terminal: &ScalarField,
    sol: &StationarySolution,
    model: &CouplingModel,
    delta: f64,
    horizon: f64,
    scheme: BackwardScheme,
) -> Result<Vec<ScalarField>> {
    let n_steps = rho_path.len().checked_sub(1).ok_or_else(|| Error::Contract("empty density path".into()))?;
    let kernel = Kernel::new(sol, horizon / n_steps as f64)?;
    hjb_backward(&kernel, rho_path, nu, v_terminal, sol, model, delta, scheme)
}

#[allow(clippy::too_many_arguments)]
fn hjb_backward(
    k: &Kernel,
    rho_path: &[ScalarField],
    nu: f64,
    v_terminal: &ScalarField,
    sol: &StationarySolution,
    model: &CouplingModel,
    delta: f64,
    scheme: BackwardScheme,
) -> Result<Vec<ScalarField>> {
    let grid = *sol.grid();
    grid.check_same(v_terminal.grid())?;
    let n_steps = rho_path.len() - 1;
    let dt = k.dt;
    let mut path = vec![ScalarField::zeros(grid); n_steps + 1];
    path[n_steps] = v_terminal.clone();
    let semi = match scheme {
        BackwardScheme::SemiImplicit => {
            Some(k.astar.scale(-dt).add_diag(&vec![1.0 + dt * delta; grid.cell_count()]).factor()?)
        }
        BackwardScheme::ColeHopf => None,
    };
    for n in (0..n_steps).rev() {
        let later = path[n + 1].values();
        let forcing = coupling_increment(model, &sol.m_bar, &rho_path[n], nu);
        let next = match &semi {
            Some(lu) => {
                let h = remainder_with(&k.astar, later);
                let rhs: Vec<f64> = (0..later.len()).map(|i| later[i] + dt * (forcing[i] - h[i])).collect();
                lu.solve(&rhs)?
            }
            None => {
                // (I - dt A* + dt/2 diag(F - delta v_later)) w = w_later, with w = exp(-(v - c)/2).
                let c = later.iter().copied().fold(f64::INFINITY, f64::min);
                let w_later: Vec<f64> = later.iter().map(|v| (-(v - c) / 2.0).exp()).collect();
                let diag: Vec<f64> = (0..later.len()).map(|i| 0.5 * dt * (forcing[i] - delta * later[i])).collect();
                let w = k.astar.scale(-dt).add_diag(&diag).shifted_identity(1.0).factor()?.solve(&w_later)?;
                if let Some(i) = w.iter().position(|x| *x <= 0.0) {
                    return Err(Error::Numeric(format!(
                        "Cole-Hopf breakdown: w <= 0 at cell {i}, step {n}; try a smaller time step"
                    )));
                }
                w.iter().map(|x| c - 2.0 * x.ln()).collect()
            }
        };
        path[n] = ScalarField::new(grid, next)?;
    }
    Ok(path)
}

/// Forward march of the FP perturbation equation; also returns the largest mass defect and positivity.
pub fn solve_fp_forward(
    v_path: &[ScalarField],
    mu_initial: &ScalarField,
    sol: &StationarySolution,
    horizon: f64,
) -> Result<(Vec<ScalarField>, f64, bool)> {
    let n_steps = v_path.len().checked_sub(1).ok_or_else(|| Error::Contract("empty value path".into()))?;
    let kernel = Kernel::new(sol, horizon / n_steps as f64)?;
    fp_forward(&kernel, v_path, mu_initial, sol)
}

fn fp_forward(
    k: &Kernel,
    v_path: &[ScalarField],
    mu_initial: &ScalarField,
    sol: &StationarySolution,
) -> Result<(Vec<ScalarField>, f64, bool)> {
    let grid = *sol.grid();
    grid.check_same(mu_initial.grid())?;
    let dt = k.dt;
    let mut path = Vec::with_capacity(v_path.len());
    path.push(mu_initial.clone());
    let mass0 = mu_initial.integral();
    let mut mass_err: f64 = 0.0;
    let mut positive = positive_density(&sol.m_bar, mu_initial);
    for v in &v_path[1..] {
        let mu = path.last().expect("nonempty");
        let bbv = k.bbstar.apply(v.values());
        let flux = face_mean_arith(mu).mul(&grad(v))?.div();
        let rhs: Vec<f64> = (0..mu.len()).map(|i| mu.values()[i] + dt * (flux.values()[i] - bbv[i])).collect();
        let next = ScalarField::new(grid, k.fp_step.solve(&rhs)?)?;
        mass_err = mass_err.max((next.integral() - mass0).abs());
        positive &= positive_density(&sol.m_bar, &next);
        path.push(next);
    }
    Ok((path, mass_err, positive))
}

fn positive_density(m_bar: &ScalarField, mu: &ScalarField) -> bool {
    m_bar.values().iter().zip(mu.values()).all(|(m, d)| m + d > 0.0)
}

/// `sup_t ||a(t) - b(t)||_inf / (exp(-s1 t) + exp(-s2 (T - t)))`, or the plain sup norm.
pub fn weighted_sup_distance(a: &[ScalarField], b: &[ScalarField], times: &[f64], rates: Option<(f64, f64)>) -> f64 {
    let horizon = times.last().copied().unwrap_or(0.0);
    a.iter()
        .zip(b)
        .zip(times)
        .map(|((x, y), t)| {
            let d = x.values().iter().zip(y.values()).fold(0.0, |acc: f64, (p, q)| acc.max((p - q).abs()));
            match rates {
                Some((s1, s2)) => d / ((-s1 * t).exp() + (-s2 * (horizon - t)).exp()),
                None => d,
            }
        })
        .fold(0.0, f64::max)
}

/// Solves the forward-backward system on `[0, horizon]` by continuation in `nu` and damped Picard iteration.
pub fn solve_mfg(
    mu_initial: &ScalarField,
    v_terminal: &ScalarField,
    horizon: f64,
    delta: f64,
    sol: &StationarySolution,
    model: &CouplingModel,
    opts: &SolveOptions,
) -> Result<DynamicSolution> {
    let mut trace = Vec::new();
    solve_mfg_traced(mu_initial, v_terminal, horizon, delta, sol, model, opts, &mut trace)
}

/// As [`solve_mfg`], appending every outer iteration to `trace`, which survives a failed solve.
#[allow(clippy::too_many_arguments)]
pub fn solve_mfg_traced(
    mu_initial: &ScalarField,
    v_terminal: &ScalarField,
    horizon: f64,
    delta: f64,
    sol: &StationarySolution,
    model: &CouplingModel,
    opts: &SolveOptions,
    trace: &mut Vec<TraceRecord>,
) -> Result<DynamicSolution> {
    opts.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    let grid = *sol.grid();
    grid.check_same(mu_initial.grid())?;
    grid.check_same(v_terminal.grid())?;
    let mass = mu_initial.integral();
    if mass.abs() > 1e-12 * mu_initial.sup_norm().max(1.0) {
        return Err(Error::Domain(format!("initial perturbation must have zero mass, got {mass:.3e}")));
    }
    let n_steps = opts.steps_for(&grid, horizon);
    let dt = horizon / n_steps as f64;
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
    let kernel = Kernel::new(sol, dt)?;

    let mut rho = vec![ScalarField::zeros(grid); n_steps + 1];
    let mut max_mass_error: f64 = 0.0;
    let mut positivity_ok = true;

    for &nu in &opts.nu_schedule {
        let mu0 = mu_initial.scale(nu);
        let v_t = v_terminal.scale(nu);
        let mut damping = opts.damping;
        let mut prev_change = f64::INFINITY;
        let mut converged = false;
        for iteration in 1..=opts.max_outer {
            let v = hjb_backward(&kernel, &rho, nu, &v_t, sol, model, delta, opts.backward_scheme)?;
            let (mu, mass_err, positive) = fp_forward(&kernel, &v, &mu0, sol)?;
            let change = weighted_sup_distance(&mu, &rho, &times, opts.envelope_rates);
            trace.push(TraceRecord { nu, iteration, damping, change });
            if !change.is_finite() {
                return Err(Error::Numeric("fixed-point iterate is not finite".into()));
            }
            if change <= opts.tol {
                rho = mu;
                max_mass_error = max_mass_error.max(mass_err);
                positivity_ok &= positive;
                converged = true;
                break;
            }
            if change > prev_change {
                damping = (damping * 0.5).max(1e-3);
            }
            prev_change = change;
            rho = rho
                .iter()
                .zip(&mu)
                .map(|(r, m)| r.zip_map(m, |a, b| (1.0 - damping) * a + damping * b))
                .collect::<Result<Vec<_>>>()?;
        }
        if !converged {
            return Err(Error::Convergence {
                context: format!("fixed-point map at nu = {nu}"),
                iterations: opts.max_outer,
                residual: prev_change,
            });
        }
        debug!("nu = {nu}: converged after {} iterations", trace.iter().filter(|r| r.nu == nu).count());
    }
    // The last accepted iterate satisfies both equations up to `tol`; recompute v for the final density.
    let v_path = hjb_backward(&kernel, &rho, 1.0, v_terminal, sol, model, delta, opts.backward_scheme)?;
    Ok(DynamicSolution {
        grid,
        horizon,
        n_steps,
        delta,
        times,
        mu_path: rho,
        v_path,
        trace: trace.clone(),
        max_mass_error,
        positivity_ok,
    })
}

#[derive(Clone, Debug)]
pub struct InfiniteHorizonResult {
    /// Largest-horizon solution restricted to its first half.
    pub solution: DynamicSolution,
    pub horizons: Vec<f64>,
    /// `d_i = sup_{t <= T_i/2} ||m^{T_i}(t) - m^{T_{i+1}}(t)||_inf` for consecutive horizons.
    pub discrepancies: Vec<f64>,
    pub converged: bool,
}

/// Solves with `v_T = 0` on increasing horizons and compares the densities on common windows.
pub fn solve_infinite_horizon(
    mu_initial: &ScalarField,
    delta: f64,
    sol: &StationarySolution,
    model: &CouplingModel,
    horizons: &[f64],
    opts: &SolveOptions,
) -> Result<InfiniteHorizonResult> {
    if horizons.len() < 2 || horizons.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("need at least two strictly increasing horizons".into()));
    }
    let grid = *sol.grid();
    let t_max = *horizons.last().expect("nonempty");
    // One time step for all horizons so that nodes coincide; `n_steps` refers to the shortest horizon.
    let dt = horizons[0] / opts.steps_for(&grid, horizons[0]) as f64;
    let zero = ScalarField::zeros(grid);
    let mut runs = Vec::with_capacity(horizons.len());
    for &t in horizons {
        let steps = (t / dt).round() as usize;
        if ((steps as f64) * dt - t).abs() > 1e-9 * t {
            return Err(Error::Domain(format!("horizon {t} is not a multiple of the time step {dt}")));
        }
        let run_opts = SolveOptions { n_steps: Some(steps), ..opts.clone() };
        runs.push(solve_mfg(mu_initial, &zero, t, delta, sol, model, &run_opts)?);
    }
    let discrepancies: Vec<f64> = runs
        .windows(2)
        .map(|pair| {
            let (short, long) = (&pair[0], &pair[1]);
            let half = short.horizon / 2.0;
            short
                .times
                .iter()
                .enumerate()
                .take_while(|(_, t)| **t <= half + 1e-12)
                .map(|(k, _)| short.mu_path[k].sub(&long.mu_path[k]).expect("same grid").sup_norm())
                .fold(0.0, f64::max)
        })
        .collect();
    let converged = discrepancies.windows(2).all(|w| w[1] <= w[0]);
    let last = runs.pop().expect("nonempty");
    Ok(InfiniteHorizonResult {
        solution: last.truncated(t_max / 2.0),
        horizons: horizons.to_vec(),
        discrepancies,
        converged,
    })
}

/// Sup residual of the original system on interior nodes, measured with centered differences.
///
/// This is an independent consistency check: it does not reuse the solver's stencils.
pub fn system_residual(dynsol: &DynamicSolution, sol: &StationarySolution, model: &CouplingModel) -> Result<f64> {
    let g = dynsol.grid;
    let h = g.h();
    let dt = dynsol.dt();
    let delta = dynsol.delta;
    let u = dynsol.u_path(sol);
    let m = dynsol.m_path(sol);
    let n = g.cell_count();
    let mut worst: f64 = 0.0;
    for k in 1..dynsol.n_steps {
        let (uk, mk) = (u[k].values(), m[k].values());
        for i in 0..n {
            let mut lap_u = 0.0;
            let mut lap_m = 0.0;
            let mut grad_sq = 0.0;
            let mut div_flux = 0.0;
            for axis in 0..g.dim() {
                let (l, r) = (g.neighbor(i, axis, -1), g.neighbor(i, axis, 1));
                lap_u += (uk[r] - 2.0 * uk[i] + uk[l]) / (h * h);
                lap_m += (mk[r] - 2.0 * mk[i] + mk[l]) / (h * h);
                let du = (uk[r] - uk[l]) / (2.0 * h);
                grad_sq += du * du;
                div_flux += (mk[r] * (uk[g.neighbor(r, axis, 1)] - uk[i]) / (2.0 * h)
                    - mk[l] * (uk[i] - uk[g.neighbor(l, axis, -1)]) / (2.0 * h))
                    / (2.0 * h);
            }
            let du_dt = (u[k + 1].values()[i] - u[k - 1].values()[i]) / (2.0 * dt);
            let dm_dt = (m[k + 1].values()[i] - m[k - 1].values()[i]) / (2.0 * dt);
            let x = g.center(i);
            let hjb = -du_dt - lap_u + 0.5 * grad_sq - model.eval(x, mk[i]) + delta * uk[i];
            let fp = dm_dt - lap_m - div_flux;
            worst = worst.max(hjb.abs()).max(fp.abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stability::solution_from_density;
    use std::f64::consts::PI;

    fn uniform_solution(n: usize, length: f64) -> StationarySolution {
        let g = PeriodicGrid::new(1, n, length).unwrap();
        solution_from_density(&ScalarField::constant(g, 1.0 / length), 0.0).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_paths() {
        let sol = uniform_solution(16, 2.0 * PI);
        let g = *sol.grid();
        let zero = ScalarField::zeros(g);
        let opts = SolveOptions { n_steps: Some(50), ..Default::default() };
        let dynsol = solve_mfg(&zero, &zero, 1.0, 0.0, &sol, &CouplingModel::linear(1.0).unwrap(), &opts).unwrap();
        assert!(dynsol.mu_path.iter().all(|m| m.sup_norm() < 1e-14));
        assert!(dynsol.v_path.iter().all(|v| v.sup_norm() < 1e-14));
        assert_eq!(dynsol.trace.len(), 4);
    }

    #[test]
    fn uniform_density_reduces_to_scalar_ode() {
        // rho = eps constant, linear(1): -v' = f(m + eps) - f(m) = eps, v(T) = 0, so v(t) = eps (T - t).
        let sol = uniform_solution(16, 1.0);
        let g = *sol.grid();
        let eps = 1e-3;
        let steps = 200;
        let rho = vec![ScalarField::constant(g, eps); steps + 1];
        for scheme in [BackwardScheme::ColeHopf, BackwardScheme::SemiImplicit] {
            let v = solve_hjb_backward(
                &rho,
                1.0,
                &ScalarField::zeros(g),
                &sol,
                &CouplingModel::linear(1.0).unwrap(),
                0.0,
                2.0,
                scheme,
            )
            .unwrap();
            for (k, vk) in v.iter().enumerate() {
                let t = 2.0 * k as f64 / steps as f64;
                assert!(vk.values().iter().all(|x| (x - eps * (2.0 - t)).abs() < 1e-6));
            }
        }
    }

    #[test]
    fn heat_mode_decay() {
        let sol = uniform_solution(128, 1.0);
        let g = *sol.grid();
        let mu0 = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let steps = 1000;
        let v = vec![ScalarField::zeros(g); steps + 1];
        let (mu, mass, positive) = solve_fp_forward(&v, &mu0.scale(0.5), &sol, 0.1).unwrap();
        assert!(positive);
        assert!(mass < 1e-12);
        let expected = (-4.0 * PI * PI * 0.1).exp();
        let got = mu[steps].values()[0] / (0.5 * mu0.values()[0]);
        assert!((got / expected - 1.0).abs() < 0.01);
    }

    #[test]
    fn remainder_is_quadratic() {
        let sol = uniform_solution(64, 1.0);
        let g = *sol.grid();
        let v = ScalarField::from_fn(g, |x| 1e-3 * (2.0 * PI * x[0]).sin()).unwrap();
        let h = hamiltonian_remainder(&sol.m_bar, &v).unwrap();
        let h2 = hamiltonian_remainder(&sol.m_bar, &v.scale(2.0)).unwrap();
        let ratio = h2.sup_norm() / h.sup_norm();
        assert!((ratio - 4.0).abs() < 0.01);
        // |Dv|^2/2 at its maximum is (2 pi 1e-3)^2 / 2.
        assert!((h.max() / (0.5 * (2.0 * PI * 1e-3f64).powi(2)) - 1.0).abs() < 0.01);
    }

    #[test]
    fn options_are_validated() {
        let bad = SolveOptions { nu_schedule: vec![0.5, 0.25, 1.0], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { damping: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { nu_schedule: vec![0.5], ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
