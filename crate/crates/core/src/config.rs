//! Run configuration: JSON with unknown keys rejected, validated before any compute.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coupling::{Builtin, CouplingModel};
use crate::dynamics::{BackwardScheme, SolveOptions};
use crate::error::{Error, Result};
use crate::expr::FieldExpr;
use crate::grid::{PeriodicGrid, ScalarField};
use crate::stationary::StationaryOptions;

/// The JSON schema shipped with the crate.
pub const SCHEMA: &str = include_str!("../schema/config.schema.json");

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub coupling: CouplingConfig,
    #[serde(default)]
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub stationary: StationaryConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one_dim")]
    pub dim: usize,
    pub n_points: usize,
    #[serde(default = "unit_length")]
    pub length: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    /// Added monotone term `eta (m - m_bar(x))` around the computed equilibrium; 0 disables it.
    #[serde(default)]
    pub stabilize_eta: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0_expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0_csv: Option<PathBuf>,
    #[serde(default, rename = "vT_expr", skip_serializing_if = "Option::is_none")]
    pub v_terminal_expr: Option<String>,
    #[serde(default, rename = "vT_csv", skip_serializing_if = "Option::is_none")]
    pub v_terminal_csv: Option<PathBuf>,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_steps: Option<usize>,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_schedule")]
    pub nu_schedule: Vec<f64>,
    #[serde(default = "default_solve_tol")]
    pub tol: f64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    #[serde(default)]
    pub backward_scheme: BackwardScheme,
    /// Measure the fixed-point change in the sup norm weighted by the predicted rates, when available.
    #[serde(default = "yes")]
    pub weighted_stopping: bool,
    /// Slack constant for the envelope checks.
    #[serde(default = "default_envelope_c")]
    pub envelope_c: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        Self {
            n_steps: d.n_steps,
            damping: d.damping,
            nu_schedule: d.nu_schedule,
            tol: d.tol,
            max_outer: d.max_outer,
            backward_scheme: d.backward_scheme,
            weighted_stopping: true,
            envelope_c: default_envelope_c(),
        }
    }
}

impl SolverConfig {
    pub fn options(&self, envelope_rates: Option<(f64, f64)>) -> SolveOptions {
        SolveOptions {
            n_steps: self.n_steps,
            damping: self.damping,
            nu_schedule: self.nu_schedule.clone(),
            tol: self.tol,
            max_outer: self.max_outer,
            backward_scheme: self.backward_scheme,
            envelope_rates: if self.weighted_stopping { envelope_rates } else { None },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    #[serde(default = "default_stationary_tol")]
    pub tol: f64,
    #[serde(default = "default_stationary_iter")]
    pub max_iter: usize,
    #[serde(default = "unit_scale")]
    pub initial_step: f64,
    #[serde(default = "default_max_step")]
    pub max_step: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Initial density as a field CSV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_csv: Option<PathBuf>,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        let d = StationaryOptions::default();
        Self {
            tol: d.tol,
            max_iter: d.max_iter,
            initial_step: d.initial_step,
            max_step: d.max_step,
            damping: d.damping,
            init_csv: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Horizon,
    Delta,
    DataScale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            Self::Horizon => "horizon",
            Self::Delta => "delta",
            Self::DataScale => "data_scale",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Read delta values as multiples of the predicted rate of the base configuration.
    #[serde(default)]
    pub delta_in_sigma_units: bool,
    /// Also compute the spectral gap of the linearized system at every point.
    #[serde(default)]
    pub spectrum: bool,
}

fn one_dim() -> usize {
    1
}
fn unit_length() -> f64 {
    1.0
}
fn unit_scale() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn default_damping() -> f64 {
    SolveOptions::default().damping
}
fn default_schedule() -> Vec<f64> {
    SolveOptions::default().nu_schedule
}
fn default_solve_tol() -> f64 {
    SolveOptions::default().tol
}
fn default_max_outer() -> usize {
    SolveOptions::default().max_outer
}
fn default_envelope_c() -> f64 {
    10.0
}
fn default_stationary_tol() -> f64 {
    StationaryOptions::default().tol
}
fn default_stationary_iter() -> usize {
    StationaryOptions::default().max_iter
}
fn default_max_step() -> f64 {
    StationaryOptions::default().max_step
}

impl RunConfig {
    /// Parses and validates; errors carry line and column of the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads the file; relative CSV paths are resolved against its directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<(Self, String)> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json_str(&text)?;
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        Ok((cfg, text))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&*q);
                }
            }
        };
        if let Some(d) = &mut self.data {
            fix(&mut d.mu0_csv);
            fix(&mut d.v_terminal_csv);
        }
        fix(&mut self.stationary.init_csv);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::Config(format!("{field}: {msg}")));
        if !(1..=2).contains(&self.grid.dim) {
            return bad("grid.dim", format!("must be 1 or 2, got {}", self.grid.dim));
        }
        if self.grid.n_points < 4 {
            return bad("grid.n_points", format!("must be at least 4, got {}", self.grid.n_points));
        }
        if !(self.grid.length > 0.0 && self.grid.length.is_finite()) {
            return bad("grid.length", format!("must be positive, got {}", self.grid.length));
        }
        Builtin::from_name(&self.coupling.name, &self.coupling.params)
            .map_err(|e| Error::Config(format!("coupling: {e}")))?;
        if !(self.coupling.stabilize_eta >= 0.0 && self.coupling.stabilize_eta.is_finite()) {
            return bad("coupling.stabilize_eta", format!("must be nonnegative, got {}", self.coupling.stabilize_eta));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad("delta", format!("must be nonnegative, got {}", self.delta));
        }
        if let Some(t) = self.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return bad("horizon", format!("must be positive, got {t}"));
            }
        }
        if let Some(hs) = &self.horizons {
            if hs.len() < 2 || hs.windows(2).any(|w| w[1] <= w[0]) || hs[0] <= 0.0 {
                return bad("horizons", "need at least two positive, strictly increasing values".into());
            }
        }
        if let Some(d) = &self.data {
            if d.mu0_expr.is_some() && d.mu0_csv.is_some() {
                return bad("data", "give mu0_expr or mu0_csv, not both".into());
            }
            if d.v_terminal_expr.is_some() && d.v_terminal_csv.is_some() {
                return bad("data", "give vT_expr or vT_csv, not both".into());
            }
            for e in [&d.mu0_expr, &d.v_terminal_expr].into_iter().flatten() {
                FieldExpr::parse(e).map_err(|err| Error::Config(format!("data: {err}")))?;
            }
            if !d.scale.is_finite() {
                return bad("data.scale", "must be finite".into());
            }
        }
        self.solver_options(None).validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        if !(self.solver.envelope_c > 0.0) {
            return bad("solver.envelope_c", "must be positive".into());
        }
        let s = &self.stationary;
        if !(s.tol > 0.0 && s.initial_step > 0.0 && s.max_step >= s.initial_step && s.damping > 0.0 && s.damping <= 1.0)
        {
            return bad("stationary", "need tol > 0, 0 < initial_step <= max_step, damping in (0, 1]".into());
        }
        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() || sw.values.iter().any(|v| !v.is_finite()) {
                return bad("sweep.values", "need at least one finite value".into());
            }
            if sw.delta_in_sigma_units && sw.axis != SweepAxis::Delta {
                return bad("sweep.delta_in_sigma_units", "only meaningful for the delta axis".into());
            }
            let ok = match sw.axis {
                SweepAxis::Horizon => sw.values.iter().all(|v| *v > 0.0),
                SweepAxis::Delta => sw.values.iter().all(|v| *v >= 0.0),
                SweepAxis::DataScale => true,
            };
            if !ok {
                return bad("sweep.values", format!("out of range for axis {}", sw.axis.name()));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<PeriodicGrid> {
        PeriodicGrid::new(self.grid.dim, self.grid.n_points, self.grid.length)
    }

    /// The configured coupling, with any spatial potential periodized to the torus side.
    pub fn base_model(&self) -> Result<CouplingModel> {
        let base = Builtin::from_name(&self.coupling.name, &self.coupling.params)?;
        CouplingModel::with_period(base, self.grid.length)
    }

    pub fn solver_options(&self, envelope_rates: Option<(f64, f64)>) -> SolveOptions {
        self.solver.options(envelope_rates)
    }

    pub fn stationary_options(&self, grid: PeriodicGrid) -> Result<StationaryOptions> {
        let s = &self.stationary;
        let init_m = s.init_csv.as_ref().map(|p| ScalarField::read_csv(grid, p)).transpose()?;
        Ok(StationaryOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            initial_step: s.initial_step,
            max_step: s.max_step,
            damping: s.damping,
            init_m,
            seed: self.seed,
        })
    }

    pub fn horizon(&self) -> Result<f64> {
        self.horizon.ok_or_else(|| Error::Config("horizon: required for this subcommand".into()))
    }

    pub fn horizons(&self) -> Result<Vec<f64>> {
        self.horizons.clone().ok_or_else(|| Error::Config("horizons: required for this subcommand".into()))
    }

    /// Initial perturbation and terminal cost, scaled by `data.scale * extra_scale`; absent fields are zero.
    pub fn data_fields(&self, grid: PeriodicGrid, extra_scale: f64) -> Result<(ScalarField, ScalarField)> {
        let d = self.data.as_ref().ok_or_else(|| Error::Config("data: required for this subcommand".into()))?;
        let field = |expr: &Option<String>, csv: &Option<PathBuf>| -> Result<ScalarField> {
            match (expr, csv) {
                (Some(e), _) => FieldExpr::parse(e)?.sample(grid),
                (None, Some(p)) => ScalarField::read_csv(grid, p),
                (None, None) => Ok(ScalarField::zeros(grid)),
            }
        };
        let s = d.scale * extra_scale;
        Ok((field(&d.mu0_expr, &d.mu0_csv)?.scale(s), field(&d.v_terminal_expr, &d.v_terminal_csv)?.scale(s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"grid": {"n_points": 16}, "coupling": {"name": "linear", "params": {"a": 1.0}}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = RunConfig::from_json_str(MINIMAL).unwrap();
        assert_eq!(cfg.grid.dim, 1);
        assert_eq!(cfg.grid.length, 1.0);
        assert_eq!(cfg.delta, 0.0);
        assert_eq!(cfg.solver.envelope_c, 10.0);
        assert_eq!(cfg.solver_options(None).nu_schedule, SolveOptions::default().nu_schedule);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let text = "{\n \"grid\": {\"n_points\": 16, \"spacing\": 2},\n \"coupling\": {\"name\": \"zero\"}\n}";
        let err = RunConfig::from_json_str(text).unwrap_err().to_string();
        assert!(err.contains("spacing") && err.contains("line 2"), "{err}");
        let top = r#"{"grid": {"n_points": 16}, "coupling": {"name": "zero"}, "extra": 1}"#;
        assert!(matches!(RunConfig::from_json_str(top), Err(Error::Config(_))));
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let cases = [
            (r#"{"grid": {"n_points": 16, "dim": 3}, "coupling": {"name": "zero"}}"#, "grid.dim"),
            (r#"{"grid": {"n_points": 16}, "coupling": {"name": "nope"}}"#, "coupling"),
            (r#"{"grid": {"n_points": 16}, "coupling": {"name": "zero"}, "delta": -1}"#, "delta"),
            (r#"{"grid": {"n_points": 16}, "coupling": {"name": "zero"}, "horizons": [2, 1]}"#, "horizons"),
            (r#"{"grid": {"n_points": 16}, "coupling": {"name": "zero"}, "data": {"mu0_expr": "cos("}}"#, "data"),
            (r#"{"grid": {"n_points": 16}, "coupling": {"name": "zero"}, "solver": {"damping": 2}}"#, "solver"),
        ];
        for (text, field) in cases {
            let err = RunConfig::from_json_str(text).unwrap_err();
            assert!(matches!(&err, Error::Config(m) if m.contains(field)), "{text}: {err}");
        }
    }

    #[test]
    fn data_fields_are_scaled_samples() {
        let text = r#"{"grid": {"n_points": 8}, "coupling": {"name": "zero"},
            "data": {"mu0_expr": "cos(2*pi*x)", "scale": 0.5}}"#;
        let cfg = RunConfig::from_json_str(text).unwrap();
        let g = cfg.grid().unwrap();
        let (mu, v) = cfg.data_fields(g, 2.0).unwrap();
        let x0 = g.center(0)[0];
        assert!((mu.values()[0] - (2.0 * std::f64::consts::PI * x0).cos()).abs() < 1e-15);
        assert_eq!(v.sup_norm(), 0.0);
    }

    #[test]
    fn schema_lists_exactly_the_accepted_top_level_keys() {
        let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
        assert_eq!(schema["additionalProperties"], serde_json::Value::Bool(false));
        let mut keys: Vec<&str> = schema["properties"].as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        let full = r#"{"grid": {"n_points": 8}, "coupling": {"name": "zero"}, "delta": 0, "horizon": 1,
            "horizons": [1, 2], "data": {}, "solver": {}, "stationary": {}, "output_dir": "o", "seed": 1,
            "sweep": {"axis": "horizon", "values": [1]}}"#;
        let value: serde_json::Value = serde_json::from_str(full).unwrap();
        let mut accepted: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        accepted.sort_unstable();
        assert_eq!(keys, accepted);
        RunConfig::from_json_str(full).unwrap();
    }
}
