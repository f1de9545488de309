//! Local couplings `f(x, m)` with bounded first and second `m`-derivatives.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Point, ScalarField};
use crate::operators::check_positive;

/// The built-in coupling families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", content = "params", rename_all = "snake_case")]
pub enum Builtin {
    Zero,
    Linear {
        a: f64,
    },
    /// `theta_amp cos(2 pi x / L) + a m / (1 + m^2) + b arctan(m)`.
    PotentialPlusSaturating {
        theta_amp: f64,
        a: f64,
        b: f64,
    },
}

impl Builtin {
    pub fn from_name(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |key: &str| -> Result<f64> {
            params.get(key).copied().ok_or_else(|| Error::Config(format!("coupling `{name}` needs parameter `{key}`")))
        };
        let allowed: &[&str] = match name {
            "zero" => &[],
            "linear" => &["a"],
            "potential_plus_saturating" => &["theta_amp", "a", "b"],
            other => return Err(Error::Usage(format!("unknown coupling `{other}`"))),
        };
        if let Some(k) = params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!("coupling `{name}` has no parameter `{k}`")));
        }
        Ok(match name {
            "zero" => Self::Zero,
            "linear" => Self::Linear { a: get("a")? },
            _ => Self::PotentialPlusSaturating { theta_amp: get("theta_amp")?, a: get("a")?, b: get("b")? },
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Linear { .. } => "linear",
            Self::PotentialPlusSaturating { .. } => "potential_plus_saturating",
        }
    }

    fn params(&self) -> Vec<f64> {
        match *self {
            Self::Zero => vec![],
            Self::Linear { a } => vec![a],
            Self::PotentialPlusSaturating { theta_amp, a, b } => vec![theta_amp, a, b],
        }
    }

    fn eval(&self, x: Point, m: f64, period: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Linear { a } => a * m,
            Self::PotentialPlusSaturating { theta_amp, a, b } => {
                theta_amp * (2.0 * PI * x[0] / period).cos() + a * m / (1.0 + m * m) + b * m.atan()
            }
        }
    }

    fn deriv_m(&self, m: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Linear { a } => a,
            Self::PotentialPlusSaturating { a, b, .. } => {
                let q = 1.0 + m * m;
                a * (1.0 - m * m) / (q * q) + b / q
            }
        }
    }

    fn deriv_mm(&self, m: f64) -> f64 {
        match *self {
            Self::Zero | Self::Linear { .. } => 0.0,
            Self::PotentialPlusSaturating { a, b, .. } => {
                let q = 1.0 + m * m;
                2.0 * a * m * (m * m - 3.0) / (q * q * q) - 2.0 * b * m / (q * q)
            }
        }
    }

    fn primitive(&self, x: Point, m: f64, period: f64) -> f64 {
        match *self {
            Self::Zero => 0.0,
            Self::Linear { a } => 0.5 * a * m * m,
            Self::PotentialPlusSaturating { theta_amp, a, b } => {
                let log_q = (m * m).ln_1p();
                theta_amp * (2.0 * PI * x[0] / period).cos() * m + 0.5 * a * log_q + b * (m * m.atan() - 0.5 * log_q)
            }
        }
    }

    /// True when the coupling does not depend on position.
    pub fn is_homogeneous(&self) -> bool {
        match *self {
            Self::PotentialPlusSaturating { theta_amp, .. } => theta_amp == 0.0,
            _ => true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Stabilization {
    eta: f64,
    m_bar: ScalarField,
}

/// A coupling `f(x, m)`, optionally rescaled, shifted, given a spatial source and stabilized around a density.
///
/// The full coupling is `scale * (base(x, m) + eta (m - m_bar(x)) + source(x) - shift)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingModel {
    base: Builtin,
    period: f64,
    scale: f64,
    shift: f64,
    stabilization: Option<Stabilization>,
    source: Option<ScalarField>,
    m_range: f64,
    c_f: f64,
}

/// Upper end of the density range sampled for `C_f` when no stationary density is known.
const DEFAULT_M_RANGE: f64 = 5.0;

impl CouplingModel {
    pub fn builtin(base: Builtin) -> Result<Self> {
        Self::with_period(base, 1.0)
    }

    /// Built-in coupling whose spatial potential has period `period` (the torus side).
    pub fn with_period(base: Builtin, period: f64) -> Result<Self> {
        if base.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Domain("coupling parameters must be finite".into()));
        }
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::Domain(format!("potential period must be positive, got {period}")));
        }
        let mut model = Self {
            base,
            period,
            scale: 1.0,
            shift: 0.0,
            stabilization: None,
            source: None,
            m_range: DEFAULT_M_RANGE,
            c_f: 0.0,
        };
        model.c_f = model.estimate_c_f();
        Ok(model)
    }

    pub fn zero() -> Self {
        Self::builtin(Builtin::Zero).expect("zero coupling is valid")
    }

    pub fn linear(a: f64) -> Result<Self> {
        Self::builtin(Builtin::Linear { a })
    }

    pub fn potential_plus_saturating(theta_amp: f64, a: f64, b: f64) -> Result<Self> {
        Self::builtin(Builtin::PotentialPlusSaturating { theta_amp, a, b })
    }

    pub fn base(&self) -> Builtin {
        self.base
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn stabilization_eta(&self) -> f64 {
        self.stabilization.as_ref().map_or(0.0, |s| s.eta)
    }

    /// Adds `eta_add (m - m_bar(x))`; `m_bar` stays a zero of the added term.
    pub fn stabilize(&self, m_bar: &ScalarField, eta_add: f64) -> Result<Self> {
        if !(eta_add > 0.0 && eta_add.is_finite()) {
            return Err(Error::Domain(format!("stabilization must be positive, got {eta_add}")));
        }
        check_positive(m_bar)?;
        let mut out = self.clone();
        match &mut out.stabilization {
            Some(s) if s.m_bar == *m_bar => s.eta += eta_add,
            Some(_) => return Err(Error::Contract("model is already stabilized around another density".into())),
            None => out.stabilization = Some(Stabilization { eta: eta_add, m_bar: m_bar.clone() }),
        }
        out.m_range = out.m_range.max(DEFAULT_M_RANGE * m_bar.max());
        out.c_f = out.estimate_c_f();
        Ok(out)
    }

    /// Adds an `m`-independent term `source(x)` (piecewise constant on its grid cells).
    pub fn with_source(&self, source: &ScalarField) -> Result<Self> {
        if !source.is_finite() {
            return Err(Error::Domain("source must be finite".into()));
        }
        let mut out = self.clone();
        out.source = Some(match &self.source {
            Some(s) => s.add(source)?,
            None => source.clone(),
        });
        Ok(out)
    }

    fn source_at(&self, x: Point) -> f64 {
        self.source.as_ref().map_or(0.0, |s| s.values()[s.grid().locate(x)])
    }

    /// Subtracts a constant (the ergodic constant) from the coupling.
    pub fn shifted(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        out.shift += lambda;
        out
    }

    /// Multiplies the whole coupling by `nu`.
    pub fn scaled(&self, nu: f64) -> Self {
        let mut out = self.clone();
        out.scale *= nu;
        out.c_f = out.estimate_c_f();
        out
    }

    fn stab_terms(&self, x: Point, m: f64) -> (f64, f64) {
        match &self.stabilization {
            Some(s) => {
                let g = s.m_bar.grid();
                let center = s.m_bar.values()[g.locate(x)];
                (s.eta * (m - center), s.eta)
            }
            None => (0.0, 0.0),
        }
    }

    pub fn eval(&self, x: Point, m: f64) -> f64 {
        self.scale * (self.base.eval(x, m, self.period) + self.stab_terms(x, m).0 + self.source_at(x) - self.shift)
    }

    pub fn deriv_m(&self, x: Point, m: f64) -> f64 {
        self.scale * (self.base.deriv_m(m) + self.stab_terms(x, m).1)
    }

    pub fn deriv_mm(&self, _x: Point, m: f64) -> f64 {
        self.scale * self.base.deriv_mm(m)
    }

    /// `F(x, m) = int_0^m f(x, s) ds`.
    pub fn primitive_f(&self, x: Point, m: f64) -> f64 {
        let stab = match &self.stabilization {
            Some(s) => {
                let center = s.m_bar.values()[s.m_bar.grid().locate(x)];
                s.eta * (0.5 * m * m - center * m)
            }
            None => 0.0,
        };
        self.scale * (self.base.primitive(x, m, self.period) + stab + (self.source_at(x) - self.shift) * m)
    }

    /// Global bound on `|f_m| + |f_mm|`.
    pub fn c_f(&self) -> f64 {
        self.c_f
    }

    /// `sup_x |f_m(x, m_bar(x))|`.
    pub fn local_c_f(&self, m_bar: &ScalarField) -> f64 {
        let g = m_bar.grid();
        (0..g.cell_count()).map(|i| self.deriv_m(g.center(i), m_bar.values()[i]).abs()).fold(0.0, f64::max)
    }

    /// True when `f` does not depend on `x`.
    pub fn is_homogeneous(&self) -> bool {
        self.base.is_homogeneous() && self.stabilization.is_none() && self.source.is_none()
    }

    pub fn eval_field(&self, m: &ScalarField) -> ScalarField {
        self.cellwise(m, |x, v| self.eval(x, v))
    }

    pub fn deriv_m_field(&self, m: &ScalarField) -> ScalarField {
        self.cellwise(m, |x, v| self.deriv_m(x, v))
    }

    pub fn primitive_field(&self, m: &ScalarField) -> ScalarField {
        self.cellwise(m, |x, v| self.primitive_f(x, v))
    }

    fn cellwise(&self, m: &ScalarField, f: impl Fn(Point, f64) -> f64) -> ScalarField {
        let g = *m.grid();
        ScalarField::from_raw(g, (0..g.cell_count()).map(|i| f(g.center(i), m.values()[i])).collect())
    }

    /// Lattice estimate of `sup |f_m| + |f_mm|` over `m in [0, m_range]`, refined until stable to 1%.
    ///
    /// The result is inflated by that 1% so the bound also covers off-lattice points.
    fn estimate_c_f(&self) -> f64 {
        let sample = |k: usize| {
            let mut best: f64 = 0.0;
            for ix in 0..16 {
                let x = [self.period * ix as f64 / 16.0, 0.0];
                for j in 0..=k {
                    let m = self.m_range * j as f64 / k as f64;
                    best = best.max(self.deriv_m(x, m).abs() + self.deriv_mm(x, m).abs());
                }
            }
            best
        };
        let mut k = 64;
        let mut prev = sample(k);
        loop {
            k *= 2;
            let next = sample(k);
            if (next - prev).abs() <= 0.01 * next.abs() || k >= 1 << 16 {
                return next * 1.01;
            }
            prev = next;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PeriodicGrid;
    use proptest::prelude::*;

    fn models() -> Vec<CouplingModel> {
        let g = PeriodicGrid::unit(16).unwrap();
        let m_bar = ScalarField::from_fn(g, |x| 1.0 + 0.3 * (2.0 * PI * x[0]).cos()).unwrap();
        vec![
            CouplingModel::zero(),
            CouplingModel::linear(1.7).unwrap(),
            CouplingModel::potential_plus_saturating(0.1, -0.5, 0.0).unwrap(),
            CouplingModel::potential_plus_saturating(0.3, -2.0, 0.4).unwrap(),
            CouplingModel::potential_plus_saturating(0.3, -2.0, 0.4).unwrap().stabilize(&m_bar, 0.7).unwrap(),
        ]
    }

    #[test]
    fn closed_form_examples() {
        let zero = CouplingModel::zero();
        assert_eq!(zero.eval([0.3, 0.0], 2.0), 0.0);
        assert_eq!(zero.c_f(), 0.0);
        let lin = CouplingModel::linear(1.0).unwrap();
        assert_eq!(lin.deriv_m([0.1, 0.0], 3.0), 1.0);
        assert_eq!(lin.primitive_f([0.1, 0.0], 2.0), 2.0);
        let sat = CouplingModel::potential_plus_saturating(0.1, -0.5, 0.0).unwrap();
        assert_eq!(sat.deriv_m([0.2, 0.0], 1.0), 0.0);
        for m in &models() {
            assert_eq!(m.primitive_f([0.4, 0.0], 0.0), 0.0);
        }
    }

    #[test]
    fn builtin_from_name() {
        let mut p = BTreeMap::new();
        p.insert("a".to_string(), 2.0);
        assert_eq!(Builtin::from_name("linear", &p).unwrap(), Builtin::Linear { a: 2.0 });
        assert!(matches!(Builtin::from_name("quadratic", &p), Err(Error::Usage(_))));
        assert!(Builtin::from_name("zero", &p).is_err());
        assert!(CouplingModel::linear(f64::NAN).is_err());
    }

    #[test]
    fn stabilize_shifts_derivative_only() {
        let g = PeriodicGrid::unit(16).unwrap();
        let one = ScalarField::constant(g, 1.0);
        let s = CouplingModel::zero().stabilize(&one, 0.3).unwrap();
        for i in 0..16 {
            let x = g.center(i);
            assert_eq!(s.deriv_m(x, 0.2 + i as f64), 0.3);
            assert_eq!(s.eval(x, 1.0), 0.0);
        }
        assert!(matches!(CouplingModel::zero().stabilize(&one, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn finite_difference_consistency_on_random_samples() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for model in models() {
            for _ in 0..1000 {
                let x = [rng.gen_range(0.0..1.0), 0.0];
                let m = rng.gen_range(0.05..4.0);
                let checks: [(&dyn Fn(f64) -> f64, f64); 3] = [
                    (&|mm| model.eval(x, mm), model.deriv_m(x, m)),
                    (&|mm| model.deriv_m(x, mm), model.deriv_mm(x, m)),
                    (&|mm| model.primitive_f(x, mm), model.eval(x, m)),
                ];
                for (f, exact) in checks {
                    let err = |e: f64| ((f(m + e) - f(m - e)) / (2.0 * e) - exact).abs();
                    let (e1, e2) = (err(1e-3), err(5e-4));
                    assert!(e1 < 1e-5 * (1.0 + exact.abs()), "{e1}");
                    if e1 > 1e-10 {
                        let ratio = e1 / e2;
                        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
                    }
                }
            }
        }
    }

    #[test]
    fn source_shifts_values_only() {
        let g = crate::grid::PeriodicGrid::unit(8).unwrap();
        let src = ScalarField::from_fn(g, |x| x[0]).unwrap();
        let base = CouplingModel::linear(2.0).unwrap();
        let model = base.with_source(&src).unwrap().with_source(&src).unwrap();
        let x = g.center(3);
        assert!((model.eval(x, 0.7) - base.eval(x, 0.7) - 2.0 * x[0]).abs() < 1e-15);
        assert_eq!(model.deriv_m(x, 0.7), base.deriv_m(x, 0.7));
        assert!((model.primitive_f(x, 0.7) - base.primitive_f(x, 0.7) - 1.4 * x[0]).abs() < 1e-15);
        assert!(!model.is_homogeneous());
        assert_eq!(model.c_f(), base.c_f());
    }

    proptest! {
        #[test]
        fn c_f_bounds_sampled_derivatives(x in 0.0..1.0f64, m in 0.0..5.0f64) {
            for model in models() {
                let x = [x, 0.0];
                prop_assert!(model.deriv_m(x, m).abs() + model.deriv_mm(x, m).abs() <= model.c_f() + 1e-12);
            }
        }
    }
}
