//! Volatility functions σ and terminal payoffs g.
//!
//! Spec strings:
//!
//! ```text
//! volatility := "cev:" ["alpha=" a ","] "p=" p      σ(x) = a·x^p, a defaults to 1
//!             | "table:" x₁ "=" v₁ ("," xᵢ "=" vᵢ)+  log-log interpolated, power-law tails
//!             | expression in x                       see [`crate::expr`]
//! payoff     := "identity" | "call:K=" k | "put:K=" k | "const:" c | expression in x
//! ```
//!
//! Every volatility is extended by σ(x) = 0 for x ≤ 0.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::math::{geometric_grid, linear_fit};
use crate::quadrature::{integrate, Tolerance};
use crate::{Error, Result};

/// Geometric probe grid used for validation and growth fits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Default for ProbeGrid {
    fn default() -> Self {
        ProbeGrid {
            lo: 0.01,
            hi: 1e6,
            points: 200,
        }
    }
}

impl ProbeGrid {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && hi.is_finite() && points >= 2) {
            return Err(Error::InvalidArgument(format!(
                "probe grid needs 0 < lo < hi < ∞ and at least 2 points, got [{lo}, {hi}] x {points}"
            )));
        }
        Ok(ProbeGrid { lo, hi, points })
    }

    pub fn nodes(&self) -> Vec<f64> {
        geometric_grid(self.lo, self.hi, self.points)
    }
}

/// Positive samples of σ, interpolated linearly in (log x, log σ) and
/// continued beyond both ends as power laws with the exponent of the
/// adjacent segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TableInterpolant {
    xs: Vec<f64>,
    values: Vec<f64>,
}

impl TableInterpolant {
    pub fn new(xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || xs.len() != values.len() {
            return Err(Error::Semantic(
                "table needs at least two (x, σ) pairs".into(),
            ));
        }
        if xs[0] <= 0.0 || xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Semantic(
                "table abscissae must be positive and strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Semantic("table values must be positive and finite".into()));
        }
        Ok(TableInterpolant { xs, values })
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn segment_exponent(&self, i: usize) -> f64 {
        libm::log(self.values[i + 1] / self.values[i]) / libm::log(self.xs[i + 1] / self.xs[i])
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&xi| xi <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let beta = self.segment_exponent(i);
        self.values[i] * libm::pow(x / self.xs[i], beta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum VolatilityKind {
    Cev { alpha: f64, p: f64 },
    Expression(Expr),
    Table(TableInterpolant),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityModel {
    kind: VolatilityKind,
}

impl VolatilityModel {
    pub fn cev(alpha: f64, p: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && p.is_finite()) {
            return Err(Error::Semantic(format!(
                "CEV needs alpha > 0 and finite p, got alpha = {alpha}, p = {p}"
            )));
        }
        Ok(VolatilityModel {
            kind: VolatilityKind::Cev { alpha, p },
        })
    }

    pub fn table(table: TableInterpolant) -> Self {
        VolatilityModel {
            kind: VolatilityKind::Table(table),
        }
    }

    /// Wraps an expression, upgrading it to a CEV model when it is
    /// structurally a positive monomial.
    pub fn from_expr(expr: Expr) -> Self {
        match expr.as_monomial() {
            Some((alpha, p)) if alpha > 0.0 && alpha.is_finite() && p.is_finite() => {
                VolatilityModel {
                    kind: VolatilityKind::Cev { alpha, p },
                }
            }
            _ => VolatilityModel {
                kind: VolatilityKind::Expression(expr),
            },
        }
    }

    /// Parses a spec string without checking positivity on the probe grid.
    pub fn parse_unchecked(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("cev:") {
            let offset = spec.len() - rest.len();
            let mut alpha = 1.0;
            let mut p = None;
            for (key, value, pos) in key_values(rest, offset)? {
                match key {
                    "alpha" => alpha = value,
                    "p" => p = Some(value),
                    other => {
                        return Err(Error::syntax(pos, format!("unknown CEV parameter '{other}'")))
                    }
                }
            }
            let p = p.ok_or_else(|| Error::syntax(spec.len(), "CEV spec needs p=<exponent>"))?;
            return VolatilityModel::cev(alpha, p);
        }
        if let Some(rest) = spec.strip_prefix("table:") {
            let offset = spec.len() - rest.len();
            let mut xs = Vec::new();
            let mut vs = Vec::new();
            for (key, value, pos) in key_values(rest, offset)? {
                let x: f64 = key
                    .parse()
                    .map_err(|_| Error::syntax(pos, format!("malformed abscissa '{key}'")))?;
                xs.push(x);
                vs.push(value);
            }
            return Ok(VolatilityModel::table(TableInterpolant::new(xs, vs)?));
        }
        Ok(VolatilityModel::from_expr(Expr::parse(spec)?))
    }

    pub fn kind(&self) -> &VolatilityKind {
        &self.kind
    }

    /// `(alpha, p)` when the model is known to be CEV.
    pub fn as_cev(&self) -> Option<(f64, f64)> {
        match self.kind {
            VolatilityKind::Cev { alpha, p } => Some((alpha, p)),
            _ => None,
        }
    }

    /// σ(x); zero for every x ≤ 0.
    pub fn sigma(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match &self.kind {
            VolatilityKind::Cev { alpha, p } => alpha * libm::pow(x, *p),
            VolatilityKind::Expression(e) => e.eval(x),
            VolatilityKind::Table(t) => t.eval(x),
        }
    }

    /// Checks σ > 0 and finite on every probe node.
    pub fn check_positive(&self, probe: &ProbeGrid) -> Result<()> {
        for x in probe.nodes() {
            let s = self.sigma(x);
            if !s.is_finite() {
                return Err(Error::Semantic(format!("σ({x:e}) = {s} is not finite")));
            }
            if s <= 0.0 {
                return Err(Error::Semantic(format!(
                    "σ ≤ 0 on (0,∞): σ({x:e}) = {s}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for VolatilityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            VolatilityKind::Cev { alpha, p } => write!(f, "cev:alpha={alpha},p={p}"),
            VolatilityKind::Expression(e) => write!(f, "{e}"),
            VolatilityKind::Table(t) => {
                f.write_str("table:")?;
                for (i, (x, v)) in t.xs.iter().zip(&t.values).enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{x}={v}")?;
                }
                Ok(())
            }
        }
    }
}

/// Parses a volatility spec and rejects it unless σ is positive and finite on
/// the default probe grid.
pub fn parse_volatility(spec: &str) -> Result<VolatilityModel> {
    let model = VolatilityModel::parse_unchecked(spec)?;
    model.check_positive(&ProbeGrid::default())?;
    Ok(model)
}

fn key_values(text: &str, offset: usize) -> Result<Vec<(&str, f64, usize)>> {
    let mut out = Vec::new();
    let mut pos = offset;
    for item in text.split(',') {
        let Some((key, value)) = item.split_once('=') else {
            return Err(Error::syntax(pos, format!("expected key=value, found '{item}'")));
        };
        let value_pos = pos + key.len() + 1;
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::syntax(value_pos, format!("malformed number '{value}'")))?;
        out.push((key.trim(), v, pos));
        pos += item.len() + 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum GrowthClass {
    AtMostLinear { c: f64 },
    StrictlySublinear,
    Superlinear,
}

/// Outcome of the tail fit behind a [`GrowthClass`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub class: GrowthClass,
    /// Slope of log(g(x)/x) against log x on the probe tail.
    pub tail_exponent: Option<f64>,
    /// `(x, g(x)/x)` on the probe tail.
    pub tail: Vec<(f64, f64)>,
}

/// Fitted exponents of g(x)/x within this margin of zero count as a bounded ratio.
pub const GROWTH_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum PayoffKind {
    Identity,
    Call { strike: f64 },
    Put { strike: f64 },
    Constant(f64),
    Expression(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PayoffSpec {
    kind: PayoffKind,
    growth: GrowthClass,
}

impl PayoffSpec {
    /// Builds a payoff, checking g ≥ 0 on the probe grid (and at 0) and
    /// attaching its growth class.
    pub fn new(kind: PayoffKind) -> Result<Self> {
        match kind {
            PayoffKind::Call { strike } | PayoffKind::Put { strike } if !(strike > 0.0 && strike.is_finite()) => {
                return Err(Error::Semantic(format!("strike must be positive, got {strike}")));
            }
            PayoffKind::Constant(c) if !(c >= 0.0 && c.is_finite()) => {
                return Err(Error::Semantic(format!("constant payoff must be nonnegative, got {c}")));
            }
            _ => {}
        }
        let mut spec = PayoffSpec {
            kind,
            growth: GrowthClass::StrictlySublinear,
        };
        let probe = ProbeGrid::default();
        for x in core::iter::once(0.0).chain(probe.nodes()) {
            let g = spec.eval(x);
            if !g.is_finite() {
                return Err(Error::Semantic(format!("g({x:e}) = {g} is not finite")));
            }
            if g < 0.0 {
                return Err(Error::Semantic(format!("payoff is negative: g({x:e}) = {g}")));
            }
        }
        spec.growth = classify_growth(&spec, &probe).class;
        Ok(spec)
    }

    pub fn kind(&self) -> &PayoffKind {
        &self.kind
    }

    pub fn growth(&self) -> GrowthClass {
        self.growth
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            PayoffKind::Identity => x,
            PayoffKind::Call { strike } => (x - strike).max(0.0),
            PayoffKind::Put { strike } => (strike - x).max(0.0),
            PayoffKind::Constant(c) => *c,
            PayoffKind::Expression(e) => e.eval(x),
        }
    }

    pub fn constant_value(&self) -> Option<f64> {
        match self.kind {
            PayoffKind::Constant(c) => Some(c),
            _ => None,
        }
    }

    /// The payoff as an expression tree (used to combine payoffs).
    pub fn to_expr(&self) -> Expr {
        match &self.kind {
            PayoffKind::Identity => Expr::X,
            PayoffKind::Call { strike } => Expr::parse(&format!("max(x - {strike}, 0)")).unwrap(),
            PayoffKind::Put { strike } => Expr::parse(&format!("max({strike} - x, 0)")).unwrap(),
            PayoffKind::Constant(c) => Expr::Num(*c),
            PayoffKind::Expression(e) => e.clone(),
        }
    }

    /// Pointwise sum of two payoffs.
    pub fn sum(&self, other: &PayoffSpec) -> Result<PayoffSpec> {
        PayoffSpec::new(PayoffKind::Expression(Expr::Add(
            alloc::boxed::Box::new(self.to_expr()),
            alloc::boxed::Box::new(other.to_expr()),
        )))
    }
}

impl fmt::Display for PayoffSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PayoffKind::Identity => f.write_str("identity"),
            PayoffKind::Call { strike } => write!(f, "call:K={strike}"),
            PayoffKind::Put { strike } => write!(f, "put:K={strike}"),
            PayoffKind::Constant(c) => write!(f, "const:{c}"),
            PayoffKind::Expression(e) => write!(f, "{e}"),
        }
    }
}

pub fn parse_payoff(spec: &str) -> Result<PayoffSpec> {
    let spec = spec.trim();
    let number = |text: &str, pos: usize| -> Result<f64> {
        text.trim()
            .parse()
            .map_err(|_| Error::syntax(pos, format!("malformed number '{text}'")))
    };
    let kind = if spec == "identity" {
        PayoffKind::Identity
    } else if let Some(k) = spec.strip_prefix("call:K=") {
        PayoffKind::Call { strike: number(k, 7)? }
    } else if let Some(k) = spec.strip_prefix("put:K=") {
        PayoffKind::Put { strike: number(k, 6)? }
    } else if let Some(c) = spec.strip_prefix("const:") {
        PayoffKind::Constant(number(c, 6)?)
    } else {
        PayoffKind::Expression(Expr::parse(spec)?)
    };
    PayoffSpec::new(kind)
}

/// Classifies the growth of g from the trend of g(x)/x on the upper quarter
/// (in log scale) of the probe grid.
pub fn classify_growth(payoff: &PayoffSpec, probe: &ProbeGrid) -> GrowthReport {
    let nodes = probe.nodes();
    let cut = libm::exp(0.25 * libm::log(probe.lo) + 0.75 * libm::log(probe.hi));
    let tail: Vec<(f64, f64)> = nodes
        .iter()
        .filter(|&&x| x >= cut)
        .map(|&x| (x, payoff.eval(x) / x))
        .collect();
    let (lx, lr): (Vec<f64>, Vec<f64>) = tail
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|(x, r)| (libm::log(*x), libm::log(*r)))
        .unzip();
    let tail_exponent = linear_fit(&lx, &lr).map(|(_, slope, _)| slope);
    let class = match tail_exponent {
        // the ratio vanishes identically on the tail
        None if tail.iter().all(|(_, r)| *r == 0.0) => GrowthClass::StrictlySublinear,
        Some(b) if b < -GROWTH_MARGIN => GrowthClass::StrictlySublinear,
        Some(b) if b > GROWTH_MARGIN => GrowthClass::Superlinear,
        _ => {
            let c = core::iter::once(0.0)
                .chain(nodes.iter().copied())
                .map(|x| payoff.eval(x) / (1.0 + x))
                .fold(0.0, f64::max);
            GrowthClass::AtMostLinear { c }
        }
    };
    GrowthReport {
        class,
        tail_exponent,
        tail,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalIntegral {
    pub a: f64,
    pub b: f64,
    /// ∫ₐᵇ σ⁻²; `None` when the integrand is infinite or the quadrature failed.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Exponent of x ↦ σ(x) − σ(0) near the absorbing boundary.
    pub boundary_exponent: Option<f64>,
    /// `(x, exponent)` at each probe node; `None` where σ is locally constant.
    pub per_point: Vec<(f64, Option<f64>)>,
    /// Smallest exponent seen anywhere.
    pub min_exponent: Option<f64>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub model: String,
    pub positivity_ok: bool,
    /// Probe nodes where σ ≤ 0.
    pub nonpositive_at: Vec<f64>,
    pub local_integrability_ok: bool,
    pub interval_integrals: Vec<IntervalIntegral>,
    pub holder_half_estimate: HolderEstimate,
    pub notes: Vec<String>,
}

/// Slack below 1/2 tolerated by the Hölder check.
pub const HOLDER_SLACK: f64 = 0.05;

fn holder_slope<F: Fn(f64) -> f64>(increment: F, scale: f64) -> Option<f64> {
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for k in 0..9 {
        let h = scale * libm::pow(10.0, -6.0 + 0.5 * k as f64);
        let d = increment(h).abs();
        if d > 0.0 && d.is_finite() {
            lx.push(libm::log(h));
            ly.push(libm::log(d));
        }
    }
    linear_fit(&lx, &ly).map(|(_, slope, _)| slope)
}

/// Probes the standing assumptions on σ: positivity, local integrability of
/// σ⁻² between consecutive probe nodes, and a log–log regression estimate of
/// the local Hölder exponent. Failed checks are reported, not raised; only a
/// non-finite σ value is an error.
pub fn validate_assumptions(model: &VolatilityModel, probe: &ProbeGrid) -> Result<AssumptionReport> {
    let nodes = probe.nodes();
    let mut nonpositive_at = Vec::new();
    for &x in &nodes {
        let s = model.sigma(x);
        if !s.is_finite() {
            return Err(Error::Domain(format!("σ({x:e}) = {s} is not finite")));
        }
        if s <= 0.0 {
            nonpositive_at.push(x);
        }
    }
    let mut notes = Vec::new();

    let tol = Tolerance::default();
    let interval_integrals: Vec<IntervalIntegral> = nodes
        .windows(2)
        .map(|w| {
            let value = integrate(
                |x| {
                    let s = model.sigma(x);
                    1.0 / (s * s)
                },
                w[0],
                w[1],
                tol,
            )
            .ok()
            .filter(|q| q.converged && q.value.is_finite())
            .map(|q| q.value);
            IntervalIntegral { a: w[0], b: w[1], value }
        })
        .collect();
    let local_integrability_ok = interval_integrals.iter().all(|i| i.value.is_some());
    if !local_integrability_ok {
        let bad = interval_integrals.iter().filter(|i| i.value.is_none()).count();
        notes.push(format!("σ⁻² failed to integrate on {bad} probe interval(s)"));
    }

    let boundary_exponent = holder_slope(|h| model.sigma(h) - model.sigma(0.0), 1.0);
    let per_point: Vec<(f64, Option<f64>)> = nodes
        .iter()
        .map(|&x| (x, holder_slope(|h| model.sigma(x + h) - model.sigma(x), x)))
        .collect();
    let min_exponent = core::iter::once(boundary_exponent)
        .chain(per_point.iter().map(|(_, e)| *e))
        .flatten()
        .reduce(f64::min);
    let pass = min_exponent.is_none_or(|e| e >= 0.5 - HOLDER_SLACK);
    if !pass {
        notes.push(format!(
            "estimated Hölder exponent {:.3} is below 1/2 (advisory only)",
            min_exponent.unwrap_or(f64::NAN)
        ));
    }
    if !nonpositive_at.is_empty() {
        notes.push(format!("σ ≤ 0 at {} probe node(s)", nonpositive_at.len()));
    }

    Ok(AssumptionReport {
        model: model.to_string(),
        positivity_ok: nonpositive_at.is_empty(),
        nonpositive_at,
        local_integrability_ok,
        interval_integrals,
        holder_half_estimate: HolderEstimate {
            boundary_exponent,
            per_point,
            min_exponent,
            pass,
        },
        notes,
    })
}
