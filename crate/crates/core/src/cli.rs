//! Command-line orchestration: config, run directories, subcommands, sweeps and exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, SweepAxis};
use crate::coupling::CouplingModel;
use crate::diagnostics::{envelope_fit, turnpike_report};
use crate::dynamics::{solve_infinite_horizon, solve_mfg_traced, DynamicSolution, TraceRecord};
use crate::error::{Error, Result};
use crate::grid::{fmt17, PeriodicGrid};
use crate::linearized::{assemble, hyperbolicity_report, MAX_DENSE_CELLS};
use crate::selftest;
use crate::stability::{analyze, StabilityReport};
use crate::stationary::{solve_stationary_discounted, solve_stationary_ergodic, StationarySolution};
use crate::svg::{line_chart, Series};

pub const OUT_ENV: &str = "MFGLAB_OUT";
const DEFAULT_OUT: &str = "mfglab_out";
/// Relative mass drift of the density path tolerated before reporting a broken invariant.
const MASS_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Parser)]
#[command(
    name = "mfglab",
    version,
    about = "Mean-field-game equilibria, stability certificates and turnpike diagnostics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Also write SVG line charts.
    #[arg(long, global = true)]
    pub plots: bool,
    /// Maximum number of concurrent sweep points.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Output directory; defaults to the config's `output_dir`, then `$MFGLAB_OUT`, then `./mfglab_out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Stationary equilibrium.
    Stationary,
    /// Stability constants and predicted rates; exits 1 when the condition fails.
    Stability,
    /// Finite-horizon forward-backward solve plus turnpike diagnostics.
    Solve,
    /// Increasing horizons with zero terminal cost.
    Infinite,
    /// Spectrum of the linearized Hamiltonian matrix.
    Linearized,
    /// One-axis parameter sweep.
    Sweep,
    /// Closed-form checks and operator identities.
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Stationary => "stationary",
            Self::Stability => "stability",
            Self::Solve => "solve",
            Self::Infinite => "infinite",
            Self::Linearized => "linearized",
            Self::Sweep => "sweep",
            Self::Selftest => "selftest",
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::StabilityViolated { .. } => 1,
        Error::Config(_) | Error::Json(_) | Error::Usage(_) | Error::Domain(_) | Error::Io(_) => 2,
        Error::Convergence { .. } | Error::Numeric(_) => 3,
        Error::Invariant(_) | Error::Contract(_) => 4,
    }
}

/// What a successful run produced.
#[derive(Debug)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub exit_code: i32,
}

/// Runs `cli`, printing any error, and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match run(&cli) {
        Ok(outcome) => outcome.exit_code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    let started = Instant::now();
    let loaded = match &cli.config {
        Some(path) => Some(RunConfig::from_path(path)?),
        None if cli.command == Command::Selftest => None,
        None => return Err(Error::Usage(format!("`{}` needs --config", cli.command.name()))),
    };
    let out_dir = resolve_out_dir(cli.out.as_deref(), loaded.as_ref().map(|(c, _)| c))?;
    fs::create_dir_all(&out_dir)?;
    let ctx = Ctx { out: out_dir.clone(), plots: cli.plots };
    let mut summary = serde_json::Map::new();
    let code = match (&loaded, cli.command) {
        (_, Command::Selftest) => run_selftest(&ctx, &mut summary)?,
        (Some((cfg, _)), cmd) => run_command(cmd, cfg, &ctx, cli.jobs, &mut summary)?,
        (None, _) => unreachable!("config presence checked above"),
    };
    let manifest = json!({
        "subcommand": cli.command.name(),
        "config_path": cli.config.as_ref().map(|p| p.display().to_string()),
        "config_sha256": loaded.as_ref().map(|(_, text)| hex_digest(text.as_bytes())),
        "config": loaded.as_ref().map(|(cfg, _)| cfg),
        "versions": { "mfglab": env!("CARGO_PKG_VERSION"), "config_schema": 1 },
        "options": { "plots": cli.plots, "jobs": cli.jobs },
        "timing": { "wall_seconds": started.elapsed().as_secs_f64() },
        "exit_code": code,
        "summary": summary,
    });
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(Outcome { out_dir, exit_code: code })
}

fn resolve_out_dir(flag: Option<&Path>, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    if let Some(p) = flag {
        return Ok(p.to_path_buf());
    }
    if let Some(p) = cfg.and_then(|c| c.output_dir.clone()) {
        return Ok(p);
    }
    Ok(std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from(DEFAULT_OUT), PathBuf::from))
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

struct Ctx {
    out: PathBuf,
    plots: bool,
}

impl Ctx {
    fn sub(&self, name: &str) -> Result<Ctx> {
        let out = self.out.join(name);
        fs::create_dir_all(&out)?;
        Ok(Ctx { out, plots: self.plots })
    }

    fn write(&self, name: &str, text: &str) -> Result<()> {
        fs::write(self.out.join(name), text)?;
        Ok(())
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<()> {
        write_json(&self.out.join(name), value)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Equilibrium, the coupling seen by the dynamics, and its stability report.
pub struct Setup {
    pub grid: PeriodicGrid,
    pub sol: StationarySolution,
    pub model: CouplingModel,
    pub report: StabilityReport,
}

/// Solves the stationary problem at `delta` (ergodic when zero) and analyzes it.
pub fn prepare(cfg: &RunConfig, delta: f64) -> Result<Setup> {
    let grid = cfg.grid()?;
    let base = cfg.base_model()?;
    let opts = cfg.stationary_options(grid)?;
    let sol = if delta > 0.0 {
        solve_stationary_discounted(&base, grid, delta, &opts)?
    } else {
        solve_stationary_ergodic(&base, grid, &opts)?
    };
    let mut model = sol.absorbed_model(&base);
    if cfg.coupling.stabilize_eta > 0.0 {
        model = model.stabilize(&sol.m_bar, cfg.coupling.stabilize_eta)?;
    }
    let report = analyze(&sol, &model, delta)?;
    Ok(Setup { grid, sol, model, report })
}

/// The same equilibrium at another discount: the coupling gains `(delta - delta_0) u_bar(x)`, which keeps
/// `(u_bar, m_bar)` stationary, so only the discount changes between sweep points.
pub fn with_discount(setup: &Setup, delta: f64) -> Result<Setup> {
    let mut sol = setup.sol.clone();
    let model = setup.model.with_source(&sol.u_bar.scale(delta - sol.delta))?;
    sol.delta = delta;
    let report = analyze(&sol, &model, delta)?;
    Ok(Setup { grid: setup.grid, sol, model, report })
}

/// Predicted rates usable as envelope weights: present only when both are positive.
fn admissible_rates(report: &StabilityReport) -> Option<(f64, f64)> {
    report.rates().filter(|r| r.sigma1 > 0.0 && r.sigma2 > 0.0).map(|r| (r.sigma1, r.sigma2))
}

fn run_command(
    cmd: Command,
    cfg: &RunConfig,
    ctx: &Ctx,
    jobs: Option<usize>,
    summary: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<i32> {
    match cmd {
        Command::Stationary => {
            let setup = prepare(cfg, cfg.delta)?;
            write_stationary(ctx, &setup)?;
            summary.insert("lambda".into(), json!(setup.sol.lambda));
            Ok(0)
        }
        Command::Stability => {
            let setup = prepare(cfg, cfg.delta)?;
            write_stationary(ctx, &setup)?;
            ctx.json("stability.json", &setup.report)?;
            summary.insert("satisfied".into(), json!(setup.report.satisfied));
            summary.insert("eta_a".into(), json!(setup.report.eta_a));
            if !setup.report.satisfied {
                warn!("stability condition fails: eta_a = {:.6e}", setup.report.eta_a);
            }
            Ok(if setup.report.satisfied { 0 } else { 1 })
        }
        Command::Solve => {
            let setup = prepare(cfg, cfg.delta)?;
            let (mu0, v_t) = cfg.data_fields(setup.grid, 1.0)?;
            let dynsol = traced_solve(ctx, cfg, &setup, &mu0, &v_t, cfg.horizon()?, cfg.delta)?;
            write_solution(ctx, &dynsol)?;
            write_trace(
                ctx,
                &dynsol.trace,
                true,
                &json!({ "max_mass_error": dynsol.max_mass_error, "positivity_ok": dynsol.positivity_ok, "n_steps": dynsol.n_steps, "dt": dynsol.dt() }),
            )?;
            let report = turnpike_report(&dynsol, &setup.sol, &setup.model, &setup.report, cfg.solver.envelope_c)?;
            ctx.json("report.json", &report)?;
            ctx.write("phi.csv", &report.phi_csv())?;
            ctx.write("envelopes.csv", &report.envelopes_csv())?;
            if ctx.plots {
                let phi = [
                    Series { label: "phi", values: &report.phi_series },
                    Series { label: "phi_tilde", values: &report.phi_tilde_series },
                ];
                ctx.write("phi.svg", &line_chart("Lyapunov functional", &report.times, &phi, false))?;
                let env = [
                    Series { label: "linf_mu", values: &report.linf_mu },
                    Series { label: "l2w_dv", values: &report.l2w_dv },
                ];
                ctx.write("envelopes.svg", &line_chart("Perturbation norms", &report.times, &env, true))?;
            }
            summary.insert("outer_iterations".into(), json!(dynsol.trace.len()));
            summary.insert("phidelta_ok".into(), json!(report.phidelta_ok));
            Ok(0)
        }
        Command::Infinite => {
            let setup = prepare(cfg, cfg.delta)?;
            let (mu0, v_t) = cfg.data_fields(setup.grid, 1.0)?;
            if v_t.sup_norm() > 0.0 {
                warn!("terminal cost is ignored by `infinite`");
            }
            let horizons = cfg.horizons()?;
            let opts = cfg.solver_options(admissible_rates(&setup.report));
            let res = solve_infinite_horizon(&mu0, cfg.delta, &setup.sol, &setup.model, &horizons, &opts)?;
            write_solution(ctx, &res.solution)?;
            let extra =
                json!({ "horizons": res.horizons, "discrepancies": res.discrepancies, "converged": res.converged });
            write_trace(ctx, &res.solution.trace, res.converged, &extra)?;
            summary.insert("discrepancies".into(), json!(res.discrepancies));
            if !res.converged {
                return Err(Error::Convergence {
                    context: format!(
                        "horizon discrepancies do not decrease; trace at {}",
                        ctx.out.join("trace.json").display()
                    ),
                    iterations: horizons.len(),
                    residual: res.discrepancies.last().copied().unwrap_or(f64::NAN),
                });
            }
            Ok(0)
        }
        Command::Linearized => {
            let setup = prepare(cfg, cfg.delta)?;
            if setup.grid.cell_count() > MAX_DENSE_CELLS {
                return Err(Error::Config(format!(
                    "grid.n_points: the dense spectrum needs at most {MAX_DENSE_CELLS} cells, got {}",
                    setup.grid.cell_count()
                )));
            }
            let sys = assemble(&setup.sol, &setup.model, cfg.delta)?;
            let hyp = hyperbolicity_report(&sys)?;
            let mut csv = String::from("re,im\n");
            for (re, im) in &hyp.spectrum {
                csv.push_str(&format!("{},{}\n", fmt17(*re), fmt17(*im)));
            }
            ctx.write("spectrum.csv", &csv)?;
            ctx.json(
                "linearized.json",
                &json!({
                    "min_abs_real_part": hyp.min_abs_real_part,
                    "quadruple_error": hyp.quadruple_error,
                    "identity_errors": sys.identity_errors,
                    "eigenvalue_count": hyp.spectrum.len(),
                    "deflation": hyp.deflation,
                }),
            )?;
            summary.insert("min_abs_real_part".into(), json!(hyp.min_abs_real_part));
            Ok(0)
        }
        Command::Sweep => run_sweep(cfg, ctx, jobs, summary),
        Command::Selftest => unreachable!("handled by the caller"),
    }
}

fn write_stationary(ctx: &Ctx, setup: &Setup) -> Result<()> {
    ctx.write("stationary.csv", &setup.sol.to_csv_string())?;
    let r = setup.sol.report();
    ctx.json(
        "stationary.json",
        &json!({
            "lambda": r.lambda,
            "delta": r.delta,
            "residuals": { "hjb": r.residual_hjb, "fp": r.residual_fp, "ansatz": r.residual_ansatz },
            "iterations": r.iterations,
            "seed": r.seed,
            "final_energy": setup.sol.energy_trace.last(),
        }),
    )
}

fn write_solution(ctx: &Ctx, dynsol: &DynamicSolution) -> Result<()> {
    ctx.write("solution_mu.csv", &DynamicSolution::path_csv(&dynsol.mu_path, &dynsol.times))?;
    ctx.write("solution_v.csv", &DynamicSolution::path_csv(&dynsol.v_path, &dynsol.times))
}

fn write_trace(ctx: &Ctx, trace: &[TraceRecord], converged: bool, extra: &serde_json::Value) -> Result<()> {
    ctx.json("trace.json", &json!({ "converged": converged, "iterations": trace, "details": extra }))
}

/// Runs the fixed point; on non-convergence the partial trace is written before the error is returned.
fn traced_solve(
    ctx: &Ctx,
    cfg: &RunConfig,
    setup: &Setup,
    mu0: &crate::ScalarField,
    v_t: &crate::ScalarField,
    horizon: f64,
    delta: f64,
) -> Result<DynamicSolution> {
    let opts = cfg.solver_options(admissible_rates(&setup.report));
    let mut trace = Vec::new();
    let res = solve_mfg_traced(mu0, v_t, horizon, delta, &setup.sol, &setup.model, &opts, &mut trace);
    let dynsol = match res {
        Ok(d) => d,
        Err(Error::Convergence { context, iterations, residual }) => {
            write_trace(ctx, &trace, false, &json!({}))?;
            return Err(Error::Convergence {
                context: format!("{context}; trace at {}", ctx.out.join("trace.json").display()),
                iterations,
                residual,
            });
        }
        Err(e) => return Err(e),
    };
    let scale = mu0.sup_norm().max(f64::MIN_POSITIVE);
    if dynsol.max_mass_error > MASS_TOLERANCE * scale.max(1.0) {
        return Err(Error::Invariant(format!("density mass drifted by {:.3e}", dynsol.max_mass_error)));
    }
    if !dynsol.positivity_ok {
        warn!("the density m_bar + mu became nonpositive somewhere; the perturbation is too large");
    }
    info!("solved in {} outer iterations", dynsol.trace.len());
    Ok(dynsol)
}

#[derive(Clone, Debug, Serialize)]
struct SweepPoint {
    id: usize,
    value: f64,
    delta: f64,
    converged: bool,
    applicable: bool,
    fitted_rate_left: Option<f64>,
    fitted_rate_right: Option<f64>,
    predicted_rates: Option<(f64, f64)>,
    min_abs_real_part: Option<f64>,
    error: Option<String>,
}

fn run_sweep(
    cfg: &RunConfig,
    ctx: &Ctx,
    jobs: Option<usize>,
    summary: &mut serde_json::Map<String, serde_json::Value>,
) -> Result<i32> {
    let sweep = cfg.sweep.clone().ok_or_else(|| Error::Config("sweep: required for this subcommand".into()))?;
    if sweep.spectrum && cfg.grid()?.cell_count() > MAX_DENSE_CELLS {
        return Err(Error::Config(format!("sweep.spectrum: needs at most {MAX_DENSE_CELLS} cells")));
    }
    if sweep.axis != SweepAxis::Horizon {
        cfg.horizon()?;
    }
    let base = prepare(cfg, cfg.delta)?;
    let deltas: Vec<f64> = match sweep.axis {
        SweepAxis::Delta if sweep.delta_in_sigma_units => {
            let sigma = base.report.sigma.ok_or(Error::StabilityViolated { eta: base.report.eta_a })?;
            sweep.values.iter().map(|v| v * sigma).collect()
        }
        SweepAxis::Delta => sweep.values.clone(),
        _ => vec![cfg.delta; sweep.values.len()],
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {jobs:?} workers: {e}")))?;
    let points: Vec<SweepPoint> = pool.install(|| {
        sweep
            .values
            .par_iter()
            .zip(&deltas)
            .enumerate()
            .map(|(id, (&value, &delta))| {
                let point_ctx = ctx.sub(&format!("point_{id:03}"));
                let result =
                    point_ctx.and_then(|pc| sweep_point(cfg, &base, sweep.axis, sweep.spectrum, value, delta, &pc));
                let mut point = SweepPoint {
                    id,
                    value,
                    delta,
                    converged: false,
                    applicable: false,
                    fitted_rate_left: None,
                    fitted_rate_right: None,
                    predicted_rates: None,
                    min_abs_real_part: None,
                    error: None,
                };
                match result {
                    Ok(p) => point = SweepPoint { id, value, ..p },
                    Err(e) => {
                        warn!("sweep point {id} ({value}): {e}");
                        point.error = Some(e.to_string());
                    }
                }
                point
            })
            .collect()
    });
    let mut csv =
        format!("{},converged,fitted_rate_left,fitted_rate_right,min_abs_real_part,applicable\n", sweep.axis.name());
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    for p in &points {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt17(if sweep.axis == SweepAxis::Delta { p.delta } else { p.value }),
            p.converged,
            opt(p.fitted_rate_left),
            opt(p.fitted_rate_right),
            opt(p.min_abs_real_part),
            p.applicable
        ));
    }
    ctx.write("sweep_summary.csv", &csv)?;
    ctx.json("sweep_points.json", &points)?;
    summary.insert("points".into(), json!(points.len()));
    summary.insert("converged".into(), json!(points.iter().filter(|p| p.converged).count()));
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn sweep_point(
    cfg: &RunConfig,
    base: &Setup,
    axis: SweepAxis,
    spectrum: bool,
    value: f64,
    delta: f64,
    ctx: &Ctx,
) -> Result<SweepPoint> {
    let own;
    let setup = if delta != base.sol.delta {
        own = with_discount(base, delta)?;
        &own
    } else {
        base
    };
    let (horizon, scale) = match axis {
        SweepAxis::Horizon => (value, 1.0),
        SweepAxis::Delta => (cfg.horizon()?, 1.0),
        SweepAxis::DataScale => (cfg.horizon()?, value),
    };
    let (mu0, v_t) = cfg.data_fields(setup.grid, scale)?;
    let rates = admissible_rates(&setup.report);
    let min_abs_real_part = if spectrum {
        Some(hyperbolicity_report(&assemble(&setup.sol, &setup.model, delta)?)?.min_abs_real_part)
    } else {
        None
    };
    let dynsol = traced_solve(ctx, cfg, setup, &mu0, &v_t, horizon, delta)?;
    write_solution(ctx, &dynsol)?;
    write_trace(ctx, &dynsol.trace, true, &json!({ "n_steps": dynsol.n_steps }))?;
    let linf: Vec<f64> = dynsol.mu_path.iter().map(|m| m.sup_norm()).collect();
    let fit = envelope_fit(&linf, &dynsol.times, rates);
    Ok(SweepPoint {
        id: 0,
        value,
        delta,
        converged: true,
        applicable: rates.is_some(),
        fitted_rate_left: fit.rate_left,
        fitted_rate_right: fit.rate_right,
        predicted_rates: rates,
        min_abs_real_part,
        error: None,
    })
}

fn run_selftest(ctx: &Ctx, summary: &mut serde_json::Map<String, serde_json::Value>) -> Result<i32> {
    let checks = selftest::run_all()?;
    for c in &checks {
        println!(
            "{} {} (defect {:.3e}, tolerance {:.1e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.defect,
            c.tolerance
        );
    }
    ctx.write("selftest.csv", &selftest::checks_csv(&checks))?;
    let failed = checks.iter().filter(|c| !c.passed).count();
    summary.insert("checks".into(), json!(checks.len()));
    summary.insert("failed".into(), json!(failed));
    Ok(if failed == 0 { 0 } else { 4 })
}
