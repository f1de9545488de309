//! Lyapunov functionals, dissipation balance, envelope fits and decay checks along computed solutions.

use serde::Serialize;

use crate::coupling::CouplingModel;
use crate::dynamics::DynamicSolution;
use crate::error::{Error, Result};
use crate::grid::{fmt17, ScalarField};
use crate::operators::{face_mean_arith, face_mean_harm, grad, weighted_norm, NormKind};
use crate::quadrature::gauss8;
use crate::stability::StabilityReport;
use crate::stationary::StationarySolution;

/// Fraction of nodes dropped at each end of a time series before summaries and fits.
const EDGE_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovSeries {
    /// `int mu v + mu^2 / m_bar`.
    pub phi: Vec<f64>,
    /// `exp(-delta t) phi`.
    pub phi_tilde: Vec<f64>,
    /// `int mu v`.
    pub psi: Vec<f64>,
}

pub fn lyapunov_from_paths(
    mu_path: &[ScalarField],
    v_path: &[ScalarField],
    times: &[f64],
    m_bar: &ScalarField,
    delta: f64,
) -> Result<LyapunovSeries> {
    if mu_path.len() != v_path.len() || mu_path.len() != times.len() {
        return Err(Error::Contract("paths and times must have equal lengths".into()));
    }
    let mut out = LyapunovSeries { phi: Vec::new(), phi_tilde: Vec::new(), psi: Vec::new() };
    for ((mu, v), t) in mu_path.iter().zip(v_path).zip(times) {
        let psi = mu.dot(v)?;
        let phi = psi + mu.zip_map(m_bar, |a, m| a * a / m)?.integral();
        out.psi.push(psi);
        out.phi.push(phi);
        out.phi_tilde.push((-delta * t).exp() * phi);
    }
    Ok(out)
}

pub fn lyapunov_series(dynsol: &DynamicSolution, sol: &StationarySolution) -> Result<LyapunovSeries> {
    lyapunov_from_paths(&dynsol.mu_path, &dynsol.v_path, &dynsol.times, &sol.m_bar, dynsol.delta)
}

/// `xi = int_0^1 (1 - z) f_mm(x, m_bar + z mu) dz`, so that `f(m_bar + mu) - f(m_bar) = f_m mu + xi mu^2`.
pub fn taylor_remainder_weight(model: &CouplingModel, m_bar: &ScalarField, mu: &ScalarField) -> Result<ScalarField> {
    let g = *m_bar.grid();
    g.check_same(mu.grid())?;
    let values = (0..g.cell_count())
        .map(|i| {
            let (x, m, d) = (g.center(i), m_bar.values()[i], mu.values()[i]);
            gauss8(|z| (1.0 - z) * model.deriv_mm(x, m + z * d), 0.0, 1.0)
        })
        .collect();
    ScalarField::new(g, values)
}

/// Right-hand side of the dissipation balance `-d(phi_tilde)/dt = D(t)` at one node.
fn dissipation_rate(
    mu: &ScalarField,
    v: &ScalarField,
    m_bar: &ScalarField,
    model: &CouplingModel,
    delta: f64,
    t: f64,
) -> Result<f64> {
    let z = mu.zip_map(m_bar, |a, m| a / m)?;
    let (dv, dz) = (grad(v), grad(&z));
    let (m_face, mu_face) = (face_mean_harm(m_bar), face_mean_arith(mu));
    let fm = model.deriv_m_field(m_bar);
    let xi = taylor_remainder_weight(model, m_bar, mu)?;
    let cells = ScalarField::new(
        *m_bar.grid(),
        (0..mu.len())
            .map(|i| {
                let (a, m) = (mu.values()[i], m_bar.values()[i]);
                fm.values()[i] * a * a + xi.values()[i] * a * a * a + delta * a * a / m
            })
            .collect(),
    )?
    .integral();
    let faces: f64 = (0..dv.values().len())
        .map(|k| {
            let (gv, gz, m, a) = (dv.values()[k], dz.values()[k], m_face.values()[k], mu_face.values()[k]);
            a * gv * gv / 2.0 + m * gv * gv + 2.0 * m * gz * gz + 2.0 * m * gv * gz + 2.0 * a * gv * gz
        })
        .sum::<f64>()
        * m_bar.grid().cell_volume();
    Ok((-delta * t).exp() * (cells + faces))
}

#[derive(Clone, Debug, Serialize)]
pub struct DissipationResidual {
    /// `|d(phi_tilde)/dt + D(t)|` per node (one-sided differences at the ends).
    pub series: Vec<f64>,
    /// Maximum over the middle 80% of nodes.
    pub summary: f64,
}

fn time_derivative(series: &[f64], dt: f64) -> Vec<f64> {
    let n = series.len();
    (0..n)
        .map(|k| match k {
            0 => (series[1] - series[0]) / dt,
            k if k == n - 1 => (series[k] - series[k - 1]) / dt,
            k => (series[k + 1] - series[k - 1]) / (2.0 * dt),
        })
        .collect()
}

fn middle_window(len: usize) -> std::ops::Range<usize> {
    let skip = (EDGE_FRACTION * len as f64).floor() as usize;
    skip..len - skip
}

pub fn dissipation_residual(
    dynsol: &DynamicSolution,
    sol: &StationarySolution,
    model: &CouplingModel,
) -> Result<DissipationResidual> {
    if dynsol.n_steps < 2 {
        return Err(Error::Domain("need at least two time steps".into()));
    }
    let lyap = lyapunov_series(dynsol, sol)?;
    let rate = time_derivative(&lyap.phi_tilde, dynsol.dt());
    let series = (0..dynsol.times.len())
        .map(|k| {
            let d = dissipation_rate(
                &dynsol.mu_path[k],
                &dynsol.v_path[k],
                &sol.m_bar,
                model,
                dynsol.delta,
                dynsol.times[k],
            )?;
            Ok((rate[k] + d).abs())
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = series[middle_window(series.len())].iter().copied().fold(0.0, f64::max);
    Ok(DissipationResidual { series, summary })
}

/// Integrated dissipation bound: `phi_tilde(t1) - phi_tilde(t2) >= k int_{t1}^{t2} int e^{-delta t}
/// (m_bar |Dv|^2 + m_bar |Dz|^2 + mu^2 / m_bar)` with `k = eta / 16 * min(1, 1 / C_P)`.
/// Returns the smallest slack over the pairings `(0, t)` and `(t, T)`, relative to `|phi_tilde(0)|`.
pub fn integrated_dissipation_slack(
    dynsol: &DynamicSolution,
    sol: &StationarySolution,
    eta: f64,
    c_p: f64,
) -> Result<f64> {
    let lyap = lyapunov_series(dynsol, sol)?;
    let k_const = eta.min(1.0) / 16.0 * (1.0f64).min(1.0 / c_p);
    let density: Vec<f64> = (0..dynsol.times.len())
        .map(|k| {
            let (mu, v) = (&dynsol.mu_path[k], &dynsol.v_path[k]);
            let z = mu.zip_map(&sol.m_bar, |a, m| a / m)?;
            let e = weighted_norm(v, &sol.m_bar, NormKind::L2Weighted)?.powi(2)
                + weighted_norm(&z, &sol.m_bar, NormKind::L2Weighted)?.powi(2)
                + weighted_norm(mu, &sol.m_bar, NormKind::L2WeightedInv)?.powi(2);
            Ok((-dynsol.delta * dynsol.times[k]).exp() * e)
        })
        .collect::<Result<Vec<_>>>()?;
    // Cumulative trapezoid.
    let dt = dynsol.dt();
    let mut cum = vec![0.0; density.len()];
    for k in 1..density.len() {
        cum[k] = cum[k - 1] + 0.5 * dt * (density[k] + density[k - 1]);
    }
    let last = density.len() - 1;
    let scale = lyap.phi_tilde[0].abs().max(f64::MIN_POSITIVE);
    let slack = (1..last)
        .flat_map(|k| {
            [
                lyap.phi_tilde[0] - lyap.phi_tilde[k] - k_const * cum[k],
                lyap.phi_tilde[k] - lyap.phi_tilde[last] - k_const * (cum[last] - cum[k]),
            ]
        })
        .fold(f64::INFINITY, f64::min);
    Ok(slack / scale)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnvelopeFit {
    pub amplitude_left: f64,
    pub rate_left: Option<f64>,
    pub amplitude_right: f64,
    pub rate_right: Option<f64>,
    /// Smallest `A` with `series <= A (e^{-r1 t} + e^{-r2 (T - t)})` at every node, using the fitted rates.
    pub envelope_amplitude: f64,
    /// Fitted rates are at least 0.9 times the configured ones.
    pub consistent: bool,
}

fn line_fit(ts: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = ts.len() as f64;
    if ts.len() < 3 {
        return None;
    }
    let (mt, my) = (ts.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = ts.iter().map(|t| (t - mt).powi(2)).sum();
    let sxy: f64 = ts.iter().zip(ys).map(|(t, y)| (t - mt) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some((my - slope * mt, slope))
}

/// Amplitude and rate of one exponential.
type Exponential = (f64, f64);

/// Two-exponential fit `A_l e^{-r_l t} + A_r e^{-r_r (T - t)}` by alternating log-linear least squares
/// on the left and right halves of the middle 80% window.
pub fn envelope_fit(series: &[f64], times: &[f64], configured: Option<(f64, f64)>) -> EnvelopeFit {
    let horizon = times.last().copied().unwrap_or(0.0);
    let peak = series.iter().copied().fold(0.0, f64::max);
    let floor = (1e-12 * peak).max(1e-300);
    let window = middle_window(series.len().max(1));
    let (mut left, mut right): (Option<Exponential>, Option<Exponential>) = (None, None);
    let eval = |part: Option<Exponential>, t: f64, from_right: bool| match part {
        Some((a, r)) => a * (-r * if from_right { horizon - t } else { t }).exp(),
        None => 0.0,
    };
    let fit_half = |other: Option<(f64, f64)>, from_right: bool| -> Option<(f64, f64)> {
        let mut ts = Vec::new();
        let mut ys = Vec::new();
        for k in window.clone() {
            let t = times[k];
            let in_half = if from_right { t >= horizon / 2.0 } else { t <= horizon / 2.0 };
            let rest = series[k] - eval(other, t, !from_right);
            if in_half && rest > floor {
                ts.push(if from_right { horizon - t } else { t });
                ys.push(rest.ln());
            }
        }
        line_fit(&ts, &ys).map(|(c, s)| (c.exp(), -s))
    };
    for _ in 0..100 {
        let new_left = fit_half(right, false);
        let new_right = fit_half(new_left, true);
        let done = new_left == left && new_right == right;
        left = new_left;
        right = new_right;
        if done {
            break;
        }
    }
    let rate_left = left.map(|p| p.1);
    let rate_right = right.map(|p| p.1);
    let (r1, r2) = (rate_left.unwrap_or(0.0), rate_right.unwrap_or(0.0));
    let envelope_amplitude = if peak == 0.0 {
        0.0
    } else {
        series.iter().zip(times).map(|(s, t)| s / ((-r1 * t).exp() + (-r2 * (horizon - t)).exp())).fold(0.0, f64::max)
    };
    let consistent = match (configured, rate_left, rate_right) {
        (Some((s1, s2)), Some(a), Some(b)) => a >= 0.9 * s1 && b >= 0.9 * s2 && a > 0.0 && b > 0.0,
        _ => false,
    };
    EnvelopeFit {
        amplitude_left: left.map_or(0.0, |p| p.0),
        rate_left,
        amplitude_right: right.map_or(0.0, |p| p.0),
        rate_right,
        envelope_amplitude,
        consistent,
    }
}

/// `sup_t ||mu(t)||_inf / (e^{-s1 t} + e^{-s2 (T - t)})`.
pub fn measured_envelope(linf: &[f64], times: &[f64], s1: f64, s2: f64) -> f64 {
    let horizon = times.last().copied().unwrap_or(0.0);
    linf.iter().zip(times).map(|(m, t)| m / ((-s1 * t).exp() + (-s2 * (horizon - t)).exp())).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedL2Check {
    pub applicable: bool,
    pub passed: bool,
    /// Largest `lhs / rhs` of the density and gradient envelopes.
    pub worst_ratio_mu: f64,
    pub worst_ratio_dv: f64,
    /// `A = ||mu_0 / sqrt(m_bar)||`, `B = ||sqrt(m_bar) |Dv(T)| ||`.
    pub a: f64,
    pub b: f64,
    pub lambda: [f64; 4],
    /// `|phi(0)| + |phi(T)|` against `A + A^2 + C_P B^2 / 2`.
    pub phi_endpoints: f64,
    pub phi_endpoints_bound: f64,
    pub phi_endpoints_ok: bool,
    /// Weighted-L2 norms per node: `||mu / sqrt(m_bar)||^2` and `||sqrt(m_bar) Dv||^2`.
    pub mu_series: Vec<f64>,
    pub dv_series: Vec<f64>,
    pub mu_bound: Vec<f64>,
    pub dv_bound: Vec<f64>,
}

/// Weighted-L2 decay envelopes with the configured constant `c` in front of the data-size terms.
pub fn weighted_l2_checks(
    dynsol: &DynamicSolution,
    sol: &StationarySolution,
    report: &StabilityReport,
    c: f64,
) -> Result<WeightedL2Check> {
    let m_bar = &sol.m_bar;
    let (t_final, delta) = (dynsol.horizon, dynsol.delta);
    let mu_series = dynsol
        .mu_path
        .iter()
        .map(|mu| Ok(weighted_norm(mu, m_bar, NormKind::L2WeightedInv)?.powi(2)))
        .collect::<Result<Vec<_>>>()?;
    let dv_series = dynsol
        .v_path
        .iter()
        .map(|v| Ok(weighted_norm(v, m_bar, NormKind::L2Weighted)?.powi(2)))
        .collect::<Result<Vec<_>>>()?;
    let a = mu_series[0].sqrt();
    let b = dv_series.last().copied().unwrap_or(0.0).sqrt();
    let cp = report.c_p;
    let base = a + a * a + cp * b * b / 2.0;
    let lambda = [c * (a + 2.0 * a * a + cp * b * b / 2.0), c * base, c * base, c * (base + b * b)];
    let lyap = lyapunov_series(dynsol, sol)?;
    let phi_endpoints = lyap.phi[0].abs() + lyap.phi.last().copied().unwrap_or(0.0).abs();
    let phi_endpoints_ok = phi_endpoints <= base * (1.0 + 1e-9) + 1e-300;

    let sigma = report.sigma.unwrap_or(0.0);
    let envelope = |l_left: f64, l_right: f64, t: f64| {
        l_left * (-(sigma - delta) * t).exp() + l_right * (-(sigma + delta) * (t_final - t)).exp()
    };
    let mu_bound: Vec<f64> = dynsol.times.iter().map(|&t| envelope(lambda[0], lambda[1], t)).collect();
    let dv_bound: Vec<f64> = dynsol.times.iter().map(|&t| envelope(lambda[2], lambda[3], t)).collect();
    let ratio = |series: &[f64], bound: &[f64]| {
        series.iter().zip(bound).map(|(s, b)| if *s == 0.0 { 0.0 } else { s / b }).fold(0.0, f64::max)
    };
    let worst_ratio_mu = ratio(&mu_series, &mu_bound);
    let worst_ratio_dv = ratio(&dv_series, &dv_bound);

    let sup_mu = dynsol.mu_path.iter().map(|m| m.sup_norm()).fold(0.0, f64::max);
    let sup_dv = dynsol.v_path.iter().map(|v| grad(v).sup_norm()).fold(0.0, f64::max);
    let small = report.theta_cap.is_some_and(|theta| sup_mu + sup_dv <= theta);
    let applicable = report.satisfied && delta < sigma && small;
    let passed = !applicable || (worst_ratio_mu <= 1.0 && worst_ratio_dv <= 1.0 && phi_endpoints_ok);
    Ok(WeightedL2Check {
        applicable,
        passed,
        worst_ratio_mu,
        worst_ratio_dv,
        a,
        b,
        lambda,
        phi_endpoints,
        phi_endpoints_bound: base,
        phi_endpoints_ok,
        mu_series,
        dv_series,
        mu_bound,
        dv_bound,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundsUsed {
    pub sigma: Option<f64>,
    pub sigma1: Option<f64>,
    pub sigma2: Option<f64>,
    pub theta_cap: Option<f64>,
    /// Measured `sup_t ||mu||_inf / (e^{-s1 t} + e^{-s2 (T - t)})`.
    pub eps_bar: Option<f64>,
    /// `||mu_0||_inf + ||v_T||_{W^{1,inf}}`.
    pub lambda_bar: f64,
    pub envelope_slack_c: f64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundConstants {
    pub lambda: [f64; 4],
    /// `||v_T||_inf + 2 eps (1/s1 + 1/s2) C_f`.
    pub c_v: Option<f64>,
    pub sup_v: f64,
    /// `sup_v <= 1.1 c_v`.
    pub c_v_ok: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TurnpikeReport {
    pub times: Vec<f64>,
    pub phi_series: Vec<f64>,
    pub phi_tilde_series: Vec<f64>,
    pub psi_series: Vec<f64>,
    pub dissipation_residual: Vec<f64>,
    pub dissipation_summary: f64,
    pub linf_mu: Vec<f64>,
    pub l2w_dv: Vec<f64>,
    pub envelope_mu: EnvelopeFit,
    pub envelope_dv_l2: EnvelopeFit,
    /// Both inequalities of the Lyapunov decay with slack `0.05 max |phi|`; `None` when the rates are undefined.
    pub phidelta_ok: Option<bool>,
    pub integrated_dissipation_slack: Option<f64>,
    pub weighted_l2: WeightedL2Check,
    pub bounds_used: BoundsUsed,
    pub bound_constants: BoundConstants,
}

/// Lyapunov decay check: `phi(T) e^{-(s + d)(T - t)} - slack <= phi(t) <= phi(0) e^{-(s - d) t} + slack`.
pub fn phidelta_holds(phi: &[f64], times: &[f64], sigma: f64, delta: f64, slack_fraction: f64) -> bool {
    let horizon = times.last().copied().unwrap_or(0.0);
    let slack = slack_fraction * phi.iter().fold(0.0f64, |a, p| a.max(p.abs()));
    let (first, last) = (phi[0], phi[phi.len() - 1]);
    phi.iter().zip(times).all(|(p, t)| {
        *p <= first * (-(sigma - delta) * t).exp() + slack
            && *p >= last * (-(sigma + delta) * (horizon - t)).exp() - slack
    })
}

pub fn turnpike_report(
    dynsol: &DynamicSolution,
    sol: &StationarySolution,
    model: &CouplingModel,
    report: &StabilityReport,
    envelope_c: f64,
) -> Result<TurnpikeReport> {
    let lyap = lyapunov_series(dynsol, sol)?;
    let residual = dissipation_residual(dynsol, sol, model)?;
    let linf_mu: Vec<f64> = dynsol.mu_path.iter().map(|m| m.sup_norm()).collect();
    let l2w_dv =
        dynsol.v_path.iter().map(|v| weighted_norm(v, &sol.m_bar, NormKind::L2Weighted)).collect::<Result<Vec<_>>>()?;
    let rates = report.rates().map(|r| (r.sigma1, r.sigma2));
    let envelope_mu = envelope_fit(&linf_mu, &dynsol.times, rates);
    let envelope_dv_l2 = envelope_fit(&l2w_dv, &dynsol.times, rates);
    let weighted_l2 = weighted_l2_checks(dynsol, sol, report, envelope_c)?;
    let delta = dynsol.delta;
    let phidelta_ok = report.sigma.map(|s| phidelta_holds(&lyap.phi, &dynsol.times, s, delta, 0.05));
    let integrated = if report.satisfied {
        Some(integrated_dissipation_slack(dynsol, sol, report.eta_a, report.c_p)?)
    } else {
        None
    };

    let mu0 = &dynsol.mu_path[0];
    let vt = dynsol.v_path.last().expect("nonempty path");
    let lambda_bar = mu0.sup_norm() + weighted_norm(vt, &sol.m_bar, NormKind::W1inf)?;
    let eps_bar = rates.map(|(s1, s2)| measured_envelope(&linf_mu, &dynsol.times, s1, s2));
    let sup_v = dynsol.v_path.iter().map(|v| v.sup_norm()).fold(0.0, f64::max);
    let c_v = match (rates, eps_bar) {
        (Some((s1, s2)), Some(eps)) if s1 > 0.0 && s2 > 0.0 => {
            Some(vt.sup_norm() + 2.0 * eps * (1.0 / s1 + 1.0 / s2) * model.c_f())
        }
        _ => None,
    };
    Ok(TurnpikeReport {
        times: dynsol.times.clone(),
        phi_series: lyap.phi,
        phi_tilde_series: lyap.phi_tilde,
        psi_series: lyap.psi,
        dissipation_residual: residual.series,
        dissipation_summary: residual.summary,
        linf_mu,
        l2w_dv,
        envelope_mu,
        envelope_dv_l2,
        phidelta_ok,
        integrated_dissipation_slack: integrated,
        bounds_used: BoundsUsed {
            sigma: report.sigma,
            sigma1: report.sigma1,
            sigma2: report.sigma2,
            theta_cap: report.theta_cap,
            eps_bar,
            lambda_bar,
            envelope_slack_c: envelope_c,
        },
        bound_constants: BoundConstants {
            lambda: weighted_l2.lambda,
            c_v,
            sup_v,
            c_v_ok: c_v.map(|c| sup_v <= 1.1 * c),
        },
        weighted_l2,
    })
}

impl TurnpikeReport {
    /// Columns `t,phi,phi_tilde,residual`.
    pub fn phi_csv(&self) -> String {
        let mut out = String::from("t,phi,phi_tilde,residual\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                fmt17(self.times[k]),
                fmt17(self.phi_series[k]),
                fmt17(self.phi_tilde_series[k]),
                fmt17(self.dissipation_residual[k])
            ));
        }
        out
    }

    /// Columns `t,linf_mu,bound_mu,l2w_dv,bound_dv`; the bounds are the fitted sup envelope and the
    /// square root of the weighted-L2 gradient envelope.
    pub fn envelopes_csv(&self) -> String {
        let horizon = self.times.last().copied().unwrap_or(0.0);
        let fit = &self.envelope_mu;
        let (r1, r2) = (fit.rate_left.unwrap_or(0.0), fit.rate_right.unwrap_or(0.0));
        let mut out = String::from("t,linf_mu,bound_mu,l2w_dv,bound_dv\n");
        for k in 0..self.times.len() {
            let t = self.times[k];
            let bound_mu = fit.envelope_amplitude * ((-r1 * t).exp() + (-r2 * (horizon - t)).exp());
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt17(t),
                fmt17(self.linf_mu[k]),
                fmt17(bound_mu),
                fmt17(self.l2w_dv[k]),
                fmt17(self.weighted_l2.dv_bound[k].sqrt())
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use crate::stability::solution_from_density;
    use std::f64::consts::PI;

    #[test]
    fn lyapunov_closed_forms() {
        let g = PeriodicGrid::unit(64).unwrap();
        let m_bar = ScalarField::constant(g, 1.0);
        let mu = ScalarField::from_fn(g, |x| (2.0 * PI * x[0]).cos()).unwrap();
        let zero = ScalarField::zeros(g);
        let s =
            lyapunov_from_paths(&[mu.clone(), zero.clone()], &[zero.clone(), mu], &[0.0, 1.0], &m_bar, 0.3).unwrap();
        assert!((s.phi[0] - 0.5).abs() < 1e-14);
        assert_eq!(s.phi[1], 0.0);
        assert_eq!(s.phi_tilde[0], s.phi[0]);
    }

    #[test]
    fn taylor_weight_matches_quadratic_remainder() {
        let g = PeriodicGrid::unit(8).unwrap();
        let model = CouplingModel::potential_plus_saturating(0.0, 1.5, 0.7).unwrap();
        let m_bar = ScalarField::constant(g, 0.8);
        let mu = ScalarField::from_fn(g, |x| 0.3 * (2.0 * PI * x[0]).sin()).unwrap();
        let xi = taylor_remainder_weight(&model, &m_bar, &mu).unwrap();
        for i in 0..g.cell_count() {
            let (x, d) = (g.center(i), mu.values()[i]);
            let exact = model.eval(x, 0.8 + d) - model.eval(x, 0.8) - model.deriv_m(x, 0.8) * d;
            assert!((xi.values()[i] * d * d - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn synthetic_two_exponential_fit() {
        let times: Vec<f64> = (0..=1000).map(|k| k as f64 * 0.01).collect();
        let series: Vec<f64> = times.iter().map(|t| (-2.0 * t).exp() + (-3.0 * (10.0 - t)).exp()).collect();
        let fit = envelope_fit(&series, &times, Some((1.0, 1.0)));
        assert!((fit.rate_left.unwrap() / 2.0 - 1.0).abs() < 0.02);
        assert!((fit.rate_right.unwrap() / 3.0 - 1.0).abs() < 0.02);
        assert!(fit.consistent);
        assert_eq!(envelope_fit(&series, &times, None), fit.clone_with_consistency(false));
    }

    #[test]
    fn constant_series_is_inconsistent() {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.1).collect();
        let fit = envelope_fit(&vec![1.0; 101], &times, Some((0.1, 0.1)));
        assert!(fit.rate_left.unwrap().abs() < 1e-12);
        assert!(!fit.consistent);
    }

    #[test]
    fn zero_solution_has_zero_diagnostics() {
        let g = PeriodicGrid::unit(16).unwrap();
        let sol = solution_from_density(&ScalarField::constant(g, 1.0), 0.0).unwrap();
        let zero = ScalarField::zeros(g);
        let dynsol = crate::dynamics::solve_mfg(
            &zero,
            &zero,
            0.5,
            0.0,
            &sol,
            &CouplingModel::linear(1.0).unwrap(),
            &crate::dynamics::SolveOptions { n_steps: Some(20), ..Default::default() },
        )
        .unwrap();
        let res = dissipation_residual(&dynsol, &sol, &CouplingModel::linear(1.0).unwrap()).unwrap();
        assert!(res.series.iter().all(|r| *r < 1e-20));
        let fit = envelope_fit(&[0.0; 21], &dynsol.times, None);
        assert_eq!(fit.envelope_amplitude, 0.0);
        assert!(fit.rate_left.is_none());
    }

    impl EnvelopeFit {
        fn clone_with_consistency(mut self, consistent: bool) -> Self {
            self.consistent = consistent;
            self
        }
    }

    #[test]
    fn phidelta_check_detects_growth() {
        let times: Vec<f64> = (0..=10).map(|k| k as f64).collect();
        let decaying: Vec<f64> = times.iter().map(|t| (-0.5 * t).exp()).collect();
        assert!(phidelta_holds(&decaying, &times, 0.1, 0.0, 0.0));
        let growing: Vec<f64> = times.iter().map(|t| 1.0 + 0.1 * t).collect();
        assert!(!phidelta_holds(&growing, &times, 0.1, 0.0, 0.05));
    }
}
