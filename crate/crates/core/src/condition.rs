//! The integral test `∫₁^∞ x/σ²(x) dx = ∞` for the martingale property of
//! `dX = σ(X) dW`, and the convex function
//!
//! ```text
//! Ψ(x) = x                                  x ≤ 1
//! Ψ(x) = x + ∫₁ˣ u (x − u) / σ²(u) du        x ≥ 1
//! ```
//!
//! whose superlinear growth exactly when the integral diverges makes the
//! stopped family `X_{τn}` uniformly integrable.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{geometric_grid, linear_fit};
use crate::model::VolatilityModel;
use crate::quadrature::{integrate_log, Tolerance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Martingale,
    StrictLocalMartingale,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SymbolicCev,
    NumericTailFit,
}

/// Power-law fit `x/σ²(x) ≈ c·x^(−β)` on the tail `[10, 10⁶]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub beta: f64,
    pub coefficient: f64,
    /// `[beta − w, beta + w]` with `w` the drift between the fits on the two
    /// halves of the tail plus twice the rms residual.
    pub band: (f64, f64),
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub model: String,
    pub verdict: Verdict,
    pub method: Method,
    /// `(B, ∫₁ᴮ x/σ²(x) dx)` for B = 10¹ … 10⁶.
    pub partial_integrals: Vec<(f64, f64)>,
    pub tail_exponent: Option<TailFit>,
    /// Value of the full integral when it converges.
    pub limit_value: Option<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Use the closed-form rule when the model is recognised as CEV.
    pub symbolic: bool,
    /// Half-width of the band around β = 1 that yields `Inconclusive`.
    pub margin: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions {
            symbolic: true,
            margin: 0.05,
        }
    }
}

fn ds_integrand(model: &VolatilityModel) -> impl Fn(f64) -> f64 + '_ {
    move |x| {
        let s = model.sigma(x);
        x / (s * s)
    }
}

/// `∫₁ᴮ x/σ²(x) dx` by adaptive quadrature (relative tolerance 1e−9).
pub fn ds_partial_integral(model: &VolatilityModel, upper: f64) -> Result<f64> {
    if !(upper > 1.0 && upper.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "upper limit must be finite and > 1, got {upper}"
        )));
    }
    integrate_log(ds_integrand(model), 1.0, upper, Tolerance::default())
        .map(|q| q.value)
        .map_err(|e| match e {
            Error::Domain(m) => Error::Domain(format!("σ vanishes in [1, {upper}]: {m}")),
            other => other,
        })
}

const TAIL_DECADES: u32 = 6;
const TAIL_POINTS: usize = 41;

fn fit_tail(model: &VolatilityModel) -> Result<TailFit> {
    let xs = geometric_grid(10.0, libm::pow(10.0, TAIL_DECADES as f64), TAIL_POINTS);
    let f = ds_integrand(model);
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(xs.len());
    for &x in &xs {
        let v = f(x);
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("x/σ²(x) = {v} at x = {x:e}")));
        }
        lx.push(libm::log(x));
        ly.push(libm::log(v));
    }
    let half = TAIL_POINTS / 2;
    let fit = |lo: usize, hi: usize| {
        linear_fit(&lx[lo..hi], &ly[lo..hi]).expect("tail grid has distinct abscissae")
    };
    let (_, head_slope, _) = fit(0, half + 1);
    let (intercept, slope, rms) = fit(half, TAIL_POINTS);
    let beta = -slope;
    let width = (slope - head_slope).abs() + 2.0 * rms;
    Ok(TailFit {
        beta,
        coefficient: libm::exp(intercept),
        band: (beta - width, beta + width),
        rms_residual: rms,
    })
}

/// Decides whether `dX = σ(X) dW` is a martingale.
///
/// Recognised CEV models `αx^p` use the exact rule (martingale iff p ≤ 1).
/// Otherwise the integrand's tail exponent β decides: the whole band at or
/// below `1 − margin` means divergence, at or above `1 + margin` means
/// convergence, anything else is `Inconclusive`.
pub fn classify_martingale(model: &VolatilityModel, opts: ClassifyOptions) -> Result<ConditionReport> {
    let mut partial_integrals = Vec::with_capacity(TAIL_DECADES as usize);
    let mut acc = 0.0;
    let mut lower = 1.0;
    for k in 1..=TAIL_DECADES {
        let upper = libm::pow(10.0, k as f64);
        acc += integrate_log(ds_integrand(model), lower, upper, Tolerance::default())?.value;
        partial_integrals.push((upper, acc));
        lower = upper;
    }
    let tail = fit_tail(model)?;

    let (verdict, method, limit_value) = match model.as_cev() {
        Some((alpha, p)) if opts.symbolic => {
            if p <= 1.0 {
                (Verdict::Martingale, Method::SymbolicCev, None)
            } else {
                let limit = 1.0 / (alpha * alpha * (2.0 * p - 2.0));
                (Verdict::StrictLocalMartingale, Method::SymbolicCev, Some(limit))
            }
        }
        _ => {
            let (lo, hi) = tail.band;
            if lo >= 1.0 + opts.margin {
                let b_max = partial_integrals.last().map_or(1.0, |p| p.0);
                let rest = tail.coefficient * libm::pow(b_max, 1.0 - tail.beta) / (tail.beta - 1.0);
                (Verdict::StrictLocalMartingale, Method::NumericTailFit, Some(acc + rest))
            } else if hi <= 1.0 - opts.margin {
                (Verdict::Martingale, Method::NumericTailFit, None)
            } else {
                (Verdict::Inconclusive, Method::NumericTailFit, None)
            }
        }
    };

    Ok(ConditionReport {
        model: model.to_string(),
        verdict,
        method,
        partial_integrals,
        tail_exponent: Some(tail),
        limit_value,
        margin: opts.margin,
    })
}

/// `∫₁ˣ uʳ du`, stable as r → −1.
fn power_integral(r: f64, x: f64) -> f64 {
    let lx = libm::log(x);
    let s = r + 1.0;
    if s == 0.0 {
        lx
    } else {
        libm::expm1(s * lx) / s
    }
}

/// Ψ(x), in closed form for CEV models and by quadrature otherwise.
pub fn psi(model: &VolatilityModel, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("Ψ needs finite x ≥ 0, got {x}")));
    }
    if x <= 1.0 {
        return Ok(x);
    }
    match model.as_cev() {
        Some((alpha, p)) => {
            let q = 1.0 - 2.0 * p;
            let integral = (x * power_integral(q, x) - power_integral(q + 1.0, x)) / (alpha * alpha);
            Ok(x + integral)
        }
        None => psi_quadrature(model, x),
    }
}

/// Ψ(x) by adaptive quadrature regardless of the model's structure.
pub fn psi_quadrature(model: &VolatilityModel, x: f64) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidArgument(format!("Ψ needs finite x ≥ 0, got {x}")));
    }
    if x <= 1.0 {
        return Ok(x);
    }
    let q = integrate_log(
        |u| {
            let s = model.sigma(u);
            u * (x - u) / (s * s)
        },
        1.0,
        x,
        Tolerance::default(),
    )
    .map_err(|e| match e {
        Error::Domain(m) => Error::Domain(format!("σ vanishes in [1, {x}]: {m}")),
        other => other,
    })?;
    Ok(x + q.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trend", rename_all = "snake_case")]
pub enum PsiTrend {
    Diverging,
    Plateauing { limit: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiProfile {
    pub model: String,
    /// `(x, Ψ(x)/x)`.
    pub points: Vec<(f64, f64)>,
    /// Ratios nondecreasing along the grid.
    pub monotone: bool,
    /// `None` with fewer than three points.
    pub trend: Option<PsiTrend>,
}

/// Successive-increment ratio below which Ψ(x)/x is read as converging.
pub const PLATEAU_RATIO: f64 = 0.9;

/// Ψ(x)/x along a geometric grid in [1, ∞), with a trend read off the last
/// three points. Increments that shrink by a fixed factor per grid step
/// signal a finite limit, extrapolated geometrically (Aitken); increments
/// that do not shrink signal divergence.
pub fn psi_growth_profile(model: &VolatilityModel, xs: &[f64]) -> Result<PsiProfile> {
    if xs.iter().any(|&x| !(x >= 1.0 && x.is_finite())) {
        return Err(Error::InvalidArgument("Ψ growth grid must lie in [1, ∞)".into()));
    }
    let points = xs
        .iter()
        .map(|&x| psi(model, x).map(|v| (x, v / x)))
        .collect::<Result<Vec<_>>>()?;
    let monotone = points
        .windows(2)
        .all(|w| w[1].1 >= w[0].1 * (1.0 - 1e-12));
    let trend = match points.len() {
        0..=2 => None,
        n => {
            let (r0, r1, r2) = (points[n - 3].1, points[n - 2].1, points[n - 1].1);
            let (d1, d2) = (r1 - r0, r2 - r1);
            Some(if d2 <= 0.0 {
                PsiTrend::Plateauing { limit: r2 }
            } else if d1 > 0.0 && d2 / d1 < PLATEAU_RATIO {
                let rho = d2 / d1;
                PsiTrend::Plateauing {
                    limit: r2 + d2 * rho / (1.0 - rho),
                }
            } else {
                PsiTrend::Diverging
            })
        }
    };
    Ok(PsiProfile {
        model: model.to_string(),
        points,
        monotone,
        trend,
    })
}

impl ConditionReport {
    pub fn summary(&self) -> String {
        let mut s = format!("{:?} ({:?})", self.verdict, self.method);
        if let Some(l) = self.limit_value {
            s.push_str(&format!(", limit {l}"));
        }
        s.to_string()
    }
}
