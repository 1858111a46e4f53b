//! Finite differences for the Cauchy problem
//!
//! ```text
//! u_t + ½σ²(x) u_xx = 0  on (0, x_max) × [0, T),   u(0, t) = g(0),   u(x, T) = g(x)
//! ```
//!
//! A truncated grid needs a far-field condition at `x_max`, which the
//! continuous problem does not have; the growth class stands in for it
//! there. The boundary condition is therefore an explicit input, and the
//! sensitivity of `u` to it is measured by [`uniqueness_gap_study`]. For the
//! identity payoff both [`FarFieldBc::DirichletPayoff`] and
//! [`FarFieldBc::ZeroGamma`] reproduce `u = x` exactly whatever σ is; the
//! minimal solution `E g(X_T)` of a strict local martingale is only reached
//! through [`FarFieldBc::DirichletProfile`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::condition::{ConditionReport, Verdict};
use crate::math::norm_cdf;
use crate::model::{PayoffKind, PayoffSpec, VolatilityModel};
use crate::sde::{estimate_minimal_price, Executor, McParams};
use crate::tridiag;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    /// Uniform on `[0, 1]`, geometric on `[1, x_max]`, with matching step at 1.
    LogUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub x_max: f64,
    pub x_intervals: usize,
    pub t_intervals: usize,
    pub spacing: Spacing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_nodes: Vec<f64>,
    pub t_nodes: Vec<f64>,
    pub spacing: Spacing,
}

impl Grid {
    pub fn new(config: &GridConfig, t_end: f64) -> Result<Grid> {
        let GridConfig { x_max, x_intervals, t_intervals, spacing } = *config;
        if !(x_max > 0.0 && x_max.is_finite()) {
            return Err(Error::InvalidArgument(format!("x_max must be positive, got {x_max}")));
        }
        if x_intervals < 4 || t_intervals < 1 {
            return Err(Error::InvalidArgument(format!(
                "need at least 4 space intervals and 1 time interval, got {x_intervals} x {t_intervals}"
            )));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!("T must be positive, got {t_end}")));
        }
        let x_nodes = match spacing {
            Spacing::LogUniform if x_max > 1.0 => log_uniform_nodes(x_max, x_intervals),
            _ => uniform_nodes(x_max, x_intervals),
        };
        let mut t_nodes = uniform_nodes(t_end, t_intervals);
        t_nodes[t_intervals] = t_end;
        Ok(Grid { x_nodes, t_nodes, spacing })
    }

    pub fn x_max(&self) -> f64 {
        *self.x_nodes.last().expect("grid has nodes")
    }

    pub fn t_end(&self) -> f64 {
        *self.t_nodes.last().expect("grid has nodes")
    }
}

fn uniform_nodes(hi: f64, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..=n).map(|i| hi * i as f64 / n as f64).collect();
    v[n] = hi;
    v
}

fn log_uniform_nodes(x_max: f64, n: usize) -> Vec<f64> {
    let lx = libm::log(x_max);
    // choose the split so that the uniform step on [0,1] matches the first geometric step
    let (n_lin, n_log) = (1..n - 1)
        .map(|n_log| {
            let n_lin = n - n_log;
            let step = libm::expm1(lx / n_log as f64);
            (n_lin, n_log, (1.0 / n_lin as f64 - step).abs())
        })
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .map(|(a, b, _)| (a, b))
        .expect("at least 4 intervals");
    let mut v = Vec::with_capacity(n + 1);
    v.extend((0..n_lin).map(|i| i as f64 / n_lin as f64));
    v.extend((0..=n_log).map(|k| libm::exp(lx * k as f64 / n_log as f64)));
    v[n_lin] = 1.0;
    v[n] = x_max;
    v
}

/// Far-field condition at `x_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "profile", rename_all = "snake_case")]
pub enum FarFieldBc {
    /// `u(x_max, t) = g(x_max)`.
    DirichletPayoff,
    /// `u_xx(x_max, t) = 0`.
    ZeroGamma,
    /// `u(x_max, t_j)` given on every time node.
    DirichletProfile(Vec<f64>),
}

impl FarFieldBc {
    pub fn name(&self) -> &'static str {
        match self {
            FarFieldBc::DirichletPayoff => "dirichlet_payoff",
            FarFieldBc::ZeroGamma => "zero_gamma",
            FarFieldBc::DirichletProfile(_) => "dirichlet_profile",
        }
    }
}

/// Boundary condition recipe that can be instantiated on any grid; used when
/// solving on several truncations.
#[derive(Clone)]
pub enum BoundarySpec {
    DirichletPayoff,
    ZeroGamma,
    /// `u(x_max, t) = profile(x_max, t)`.
    Profile {
        name: String,
        profile: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for BoundarySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl BoundarySpec {
    pub fn profile<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        BoundarySpec::Profile {
            name: name.into(),
            profile: Arc::new(f),
        }
    }

    /// The minimal solution of the identity payoff under `σ(x) = αx²`:
    /// `x(2Φ(1/(xα√(T−t))) − 1)`.
    pub fn minimal_identity_cev2(alpha: f64, t_end: f64) -> Self {
        BoundarySpec::profile("minimal_profile", move |x, t| {
            minimal_identity_cev2(alpha, x, t_end - t)
        })
    }

    pub fn name(&self) -> String {
        match self {
            BoundarySpec::DirichletPayoff => "dirichlet_payoff".into(),
            BoundarySpec::ZeroGamma => "zero_gamma".into(),
            BoundarySpec::Profile { name, .. } => name.clone(),
        }
    }

    pub fn instantiate(&self, grid: &Grid) -> Result<FarFieldBc> {
        Ok(match self {
            BoundarySpec::DirichletPayoff => FarFieldBc::DirichletPayoff,
            BoundarySpec::ZeroGamma => FarFieldBc::ZeroGamma,
            BoundarySpec::Profile { name, profile } => {
                let x_max = grid.x_max();
                let values: Vec<f64> = grid.t_nodes.iter().map(|&t| profile(x_max, t)).collect();
                if let Some(t) = values.iter().zip(&grid.t_nodes).find(|(v, _)| !v.is_finite()).map(|p| p.1) {
                    return Err(Error::InvalidArgument(format!(
                        "boundary profile '{name}' is not finite at t = {t}"
                    )));
                }
                FarFieldBc::DirichletProfile(values)
            }
        })
    }
}

/// `E X_T` for `σ(x) = αx²` started at `x`, `tau = T − t` ahead.
pub fn minimal_identity_cev2(alpha: f64, x: f64, tau: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if tau <= 0.0 {
        return x;
    }
    x * (2.0 * norm_cdf(1.0 / (x * alpha * libm::sqrt(tau))) - 1.0)
}

/// `u*(x) = x − E X_T = 2xΦ(−1/(xα√(T−t)))` for `σ(x) = αx²`.
pub fn defect_cev2(alpha: f64, x: f64, tau: f64) -> f64 {
    if x <= 0.0 || tau <= 0.0 {
        return 0.0;
    }
    2.0 * x * norm_cdf(-1.0 / (x * alpha * libm::sqrt(tau)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// 1 = fully implicit, ½ = Crank–Nicolson.
    pub theta: f64,
    /// Fully implicit steps taken first when `theta < 1` (Rannacher).
    pub startup_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            theta: 0.5,
            startup_steps: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub time_steps: usize,
    pub implicit_startup_steps: usize,
    pub min_value: f64,
    pub max_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeSolution {
    pub grid: Grid,
    /// `values[j][i] = u(x_nodes[i], t_nodes[j])`.
    pub values: Vec<Vec<f64>>,
    pub bc: FarFieldBc,
    pub theta: f64,
    pub startup_steps: usize,
    pub model: String,
    pub payoff: String,
    pub diagnostics: SolverDiagnostics,
}

impl PdeSolution {
    /// Linear interpolation in x on the time row closest to `t`.
    pub fn value_at(&self, x: f64, t: f64) -> f64 {
        let ts = &self.grid.t_nodes;
        let j = ts
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map_or(0, |(j, _)| j);
        interpolate_row(&self.grid.x_nodes, &self.values[j], x)
    }

    /// `u(x, t₀)` on the first time row.
    pub fn initial_value(&self, x: f64) -> f64 {
        interpolate_row(&self.grid.x_nodes, &self.values[0], x)
    }
}

fn interpolate_row(xs: &[f64], row: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return row[0];
    }
    if x >= xs[n - 1] {
        return row[n - 1];
    }
    let i = xs.partition_point(|&xi| xi <= x) - 1;
    if xs[i] == x {
        return row[i];
    }
    let w = (x - xs[i]) / (xs[i + 1] - xs[i]);
    row[i] + w * (row[i + 1] - row[i])
}

/// Backward θ-scheme for the Cauchy problem.
///
/// Each step solves `(I − θΔτ L) δ = Δτ L uⁿ` for the increment
/// `δ = uⁿ⁺¹ − uⁿ`, with `L` the three-point second difference on the
/// (possibly nonuniform) nodes scaled by ½σ². Functions with `L u = 0`
/// are therefore reproduced exactly.
pub fn solve_cauchy(
    model: &VolatilityModel,
    payoff: &PayoffSpec,
    grid: &Grid,
    bc: &FarFieldBc,
    solver: &SolverConfig,
) -> Result<PdeSolution> {
    if !(solver.theta >= 0.5 && solver.theta <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must lie in [1/2, 1], got {}",
            solver.theta
        )));
    }
    let xs = &grid.x_nodes;
    let ts = &grid.t_nodes;
    let n = xs.len() - 1;
    let m = ts.len() - 1;
    if let FarFieldBc::DirichletProfile(p) = bc {
        if p.len() != ts.len() || p.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "Dirichlet profile must have one finite value per time node".into(),
            ));
        }
    }
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    // ½σ²(x_i)·2/(h_{i−1} + h_i) for interior nodes
    let mut weight = vec![0.0; n + 1];
    for i in 1..n {
        let s = model.sigma(xs[i]);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain(format!("σ({}) = {s} on the grid", xs[i])));
        }
        weight[i] = s * s / (h[i - 1] + h[i]);
    }

    let g0 = payoff.eval(0.0);
    let g_max = payoff.eval(xs[n]);
    let terminal: Vec<f64> = xs.iter().map(|&x| payoff.eval(x)).collect();
    if terminal.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("payoff is not finite on the grid".into()));
    }
    let mut values = vec![Vec::new(); m + 1];
    values[m] = terminal;

    let mut lower = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut upper = vec![0.0; n + 1];
    let mut rhs = vec![0.0; n + 1];
    let mut implicit_startup = 0;
    let rho = h[n - 1] / h[n - 2];

    for (step, j) in (0..m).rev().enumerate() {
        let u = &values[j + 1];
        let dtau = ts[j + 1] - ts[j];
        let theta = if solver.theta < 1.0 && step < solver.startup_steps {
            implicit_startup += 1;
            1.0
        } else {
            solver.theta
        };
        let a = theta * dtau;
        diag[0] = 1.0;
        upper[0] = 0.0;
        rhs[0] = g0 - u[0];
        for i in 1..n {
            let w = weight[i];
            let lu = w * ((u[i + 1] - u[i]) / h[i] - (u[i] - u[i - 1]) / h[i - 1]);
            lower[i] = -a * w / h[i - 1];
            upper[i] = -a * w / h[i];
            diag[i] = 1.0 + a * w * (1.0 / h[i - 1] + 1.0 / h[i]);
            rhs[i] = dtau * lu;
        }
        let delta = match bc {
            FarFieldBc::ZeroGamma => {
                // δ_N = (1+ρ)δ_{N−1} − ρδ_{N−2} − e folded into row N−1
                let e = (u[n] - u[n - 1]) - rho * (u[n - 1] - u[n - 2]);
                let k = n - 1;
                lower[k] -= upper[k] * rho;
                diag[k] += upper[k] * (1.0 + rho);
                rhs[k] += upper[k] * e;
                upper[k] = 0.0;
                let mut d = tridiag::solve(&lower[..n], &diag[..n], &upper[..n], &rhs[..n])
                    .ok_or_else(|| Error::Solver { step, message: "singular tridiagonal system".into() })?;
                let dn = (1.0 + rho) * d[n - 1] - rho * d[n - 2] - e;
                d.push(dn);
                d
            }
            _ => {
                let target = match bc {
                    FarFieldBc::DirichletProfile(p) => p[j],
                    _ => g_max,
                };
                lower[n] = 0.0;
                diag[n] = 1.0;
                rhs[n] = target - u[n];
                tridiag::solve(&lower, &diag, &upper, &rhs)
                    .ok_or_else(|| Error::Solver { step, message: "singular tridiagonal system".into() })?
            }
        };
        let next: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + d).collect();
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            return Err(Error::Solver {
                step,
                message: format!("non-finite value at x = {}, t = {}", xs[i], ts[j]),
            });
        }
        values[j] = next;
    }
    debug_assert!(values.iter().all(|row| row[0] == g0));

    let (min_value, max_value) = values
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    Ok(PdeSolution {
        grid: grid.clone(),
        values,
        bc: bc.clone(),
        theta: solver.theta,
        startup_steps: solver.startup_steps,
        model: model.to_string(),
        payoff: payoff.to_string(),
        diagnostics: SolverDiagnostics {
            time_steps: m,
            implicit_startup_steps: implicit_startup,
            min_value,
            max_value,
        },
    })
}

/// Probe points and step sizes for [`pde_residual`].
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStencil {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    pub hx: f64,
    pub ht: f64,
}

/// `max |u_t + ½σ²u_xx|` over the stencil, by central differences of an
/// evaluable surface `u(x, t)`.
pub fn pde_residual<F: Fn(f64, f64) -> f64>(
    surface: F,
    model: &VolatilityModel,
    stencil: &ResidualStencil,
) -> f64 {
    let (hx, ht) = (stencil.hx, stencil.ht);
    let mut worst: f64 = 0.0;
    for &t in &stencil.ts {
        for &x in &stencil.xs {
            let u = surface(x, t);
            let ut = (surface(x, t + ht) - surface(x, t - ht)) / (2.0 * ht);
            let uxx = (surface(x + hx, t) - 2.0 * u + surface(x - hx, t)) / (hx * hx);
            let s = model.sigma(x);
            worst = worst.max((ut + 0.5 * s * s * uxx).abs());
        }
    }
    worst
}

/// Residual of a grid surface at interior nodes, central in time and the
/// three-point formula in space; rows with `t > T − exclude_near_maturity`
/// are skipped.
pub fn grid_residual(
    values: &[Vec<f64>],
    grid: &Grid,
    model: &VolatilityModel,
    exclude_near_maturity: f64,
) -> f64 {
    let xs = &grid.x_nodes;
    let ts = &grid.t_nodes;
    let t_end = grid.t_end();
    let mut worst: f64 = 0.0;
    for j in 1..ts.len() - 1 {
        if ts[j] > t_end - exclude_near_maturity {
            continue;
        }
        for i in 1..xs.len() - 1 {
            let (hl, hr) = (xs[i] - xs[i - 1], xs[i + 1] - xs[i]);
            let ut = (values[j + 1][i] - values[j - 1][i]) / (ts[j + 1] - ts[j - 1]);
            let uxx = 2.0
                * ((values[j][i + 1] - values[j][i]) / hr - (values[j][i] - values[j][i - 1]) / hl)
                / (hl + hr);
            let s = model.sigma(xs[i]);
            worst = worst.max((ut + 0.5 * s * s * uxx).abs());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectMethod {
    /// Martingale verdict: `u* ≡ 0`.
    Zero,
    /// `σ = αx²`: closed form.
    ClosedForm,
    /// `x` minus the extrapolated killed-path ladder, interpolated from a
    /// coarse set of nodes.
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectProfile {
    pub grid: Grid,
    pub values: Vec<Vec<f64>>,
    pub method: DefectMethod,
    pub warnings: Vec<String>,
}

/// Monte Carlo settings for the general defect route.
#[derive(Debug, Clone, PartialEq)]
pub struct DefectOptions {
    pub ladder: Vec<f64>,
    pub mc: McParams,
    /// The Monte Carlo route samples at most this many x and t nodes.
    pub max_x_samples: usize,
    pub max_t_samples: usize,
}

impl Default for DefectOptions {
    fn default() -> Self {
        DefectOptions {
            ladder: vec![8.0, 16.0, 32.0, 64.0],
            mc: McParams {
                n_paths: 20_000,
                ..McParams::default()
            },
            max_x_samples: 9,
            max_t_samples: 3,
        }
    }
}

/// Aitken extrapolation of the last three terms of an increasing sequence;
/// the last term unless the increments shrink by at least
/// [`crate::condition::PLATEAU_RATIO`].
pub fn extrapolate_ladder(values: &[f64]) -> f64 {
    match values {
        [] => f64::NAN,
        [.., a, b, c] => {
            let (d1, d2) = (b - a, c - b);
            if d1 > 0.0 && d2 > 0.0 && d2 < crate::condition::PLATEAU_RATIO * d1 {
                c + d2 * d2 / (d1 - d2)
            } else {
                *c
            }
        }
        [.., last] => *last,
    }
}

fn sample_indices(len: usize, max: usize) -> Vec<usize> {
    if len <= max || max < 2 {
        return (0..len).collect();
    }
    let mut idx: Vec<usize> = (0..max).map(|k| k * (len - 1) / (max - 1)).collect();
    idx.dedup();
    idx
}

/// The martingale defect `u*(x, t) = x − E X_T^{x,t}` on a grid.
pub fn defect_profile<E: Executor>(
    model: &VolatilityModel,
    grid: &Grid,
    condition: &ConditionReport,
    options: &DefectOptions,
    exec: &E,
) -> Result<DefectProfile> {
    let xs = &grid.x_nodes;
    let ts = &grid.t_nodes;
    let t_end = grid.t_end();
    let mut warnings = Vec::new();
    if condition.verdict == Verdict::Inconclusive {
        warnings.push("condition verdict is inconclusive; defect estimated anyway".into());
    }
    if condition.verdict == Verdict::Martingale {
        return Ok(DefectProfile {
            grid: grid.clone(),
            values: vec![vec![0.0; xs.len()]; ts.len()],
            method: DefectMethod::Zero,
            warnings,
        });
    }
    if let Some((alpha, p)) = model.as_cev() {
        if p == 2.0 {
            let values = ts
                .iter()
                .map(|&t| xs.iter().map(|&x| defect_cev2(alpha, x, t_end - t)).collect())
                .collect();
            return Ok(DefectProfile {
                grid: grid.clone(),
                values,
                method: DefectMethod::ClosedForm,
                warnings,
            });
        }
    }
    // coarse Monte Carlo samples, then linear interpolation onto the grid
    let identity = PayoffSpec::new(PayoffKind::Identity)?;
    let xi = sample_indices(xs.len(), options.max_x_samples);
    let tj = sample_indices(ts.len(), options.max_t_samples);
    let mut coarse = vec![vec![0.0; xi.len()]; tj.len()];
    for (a, &j) in tj.iter().enumerate() {
        for (b, &i) in xi.iter().enumerate() {
            let (x, t) = (xs[i], ts[j]);
            if x <= 0.0 || t >= t_end {
                continue;
            }
            let ladder = estimate_minimal_price(model, &identity, x, t, t_end, &options.ladder, &options.mc, exec)?;
            let means: Vec<f64> = ladder.iter().map(|e| e.mean).collect();
            coarse[a][b] = x - extrapolate_ladder(&means);
        }
    }
    let cx: Vec<f64> = xi.iter().map(|&i| xs[i]).collect();
    let ct: Vec<f64> = tj.iter().map(|&j| ts[j]).collect();
    let values = ts
        .iter()
        .map(|&t| {
            let k = ct.partition_point(|&c| c <= t).clamp(1, ct.len().max(2) - 1);
            let (lo, hi) = if ct.len() < 2 { (0, 0) } else { (k - 1, k) };
            let w = if hi == lo { 0.0 } else { (t - ct[lo]) / (ct[hi] - ct[lo]) };
            xs.iter()
                .map(|&x| {
                    let a = interpolate_row(&cx, &coarse[lo], x);
                    let b = interpolate_row(&cx, &coarse[hi], x);
                    a + w * (b - a)
                })
                .collect()
        })
        .collect();
    warnings.push(format!(
        "Monte Carlo defect on {} x {} coarse nodes, ladder {:?}",
        cx.len(),
        ct.len(),
        options.ladder
    ));
    Ok(DefectProfile {
        grid: grid.clone(),
        values,
        method: DefectMethod::MonteCarlo,
        warnings,
    })
}

/// `u + λu*` on the shared grid; the terminal row and the `x = 0` column are
/// copied from `u` unchanged.
pub fn add_defect_solution(u: &PdeSolution, defect: &DefectProfile, lambda: f64) -> Result<PdeSolution> {
    if u.grid.x_nodes != defect.grid.x_nodes || u.grid.t_nodes != defect.grid.t_nodes {
        return Err(Error::GridMismatch(format!(
            "solution grid {}x{} differs from defect grid {}x{}",
            u.grid.x_nodes.len(),
            u.grid.t_nodes.len(),
            defect.grid.x_nodes.len(),
            defect.grid.t_nodes.len()
        )));
    }
    let last = u.values.len() - 1;
    let values: Vec<Vec<f64>> = u
        .values
        .iter()
        .zip(&defect.values)
        .enumerate()
        .map(|(j, (row, drow))| {
            if j == last {
                return row.clone();
            }
            row.iter()
                .zip(drow)
                .enumerate()
                .map(|(i, (a, d))| if i == 0 { *a } else { a + lambda * d })
                .collect()
        })
        .collect();
    let mut out = u.clone();
    out.values = values;
    out.payoff = format!("{} (+{lambda}·u*)", u.payoff);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "trend", rename_all = "snake_case")]
pub enum GapTrend {
    VanishingGap,
    PersistentGap { level: f64 },
    /// Neither shrinking below the threshold nor stabilising.
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapRung {
    pub x_max: f64,
    pub x_intervals: usize,
    /// `(x, u_A(x, 0), u_B(x, 0), |u_A − u_B|)` per reference point.
    pub points: Vec<(f64, f64, f64, f64)>,
    pub max_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub model: String,
    pub payoff: String,
    pub bc_pair: (String, String),
    pub rungs: Vec<GapRung>,
    pub trend: GapTrend,
}

/// Grid and solver settings shared by every rung of a gap study; space
/// resolution scales with `x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStudyConfig {
    pub t_end: f64,
    pub intervals_per_unit_x: f64,
    pub t_intervals: usize,
    pub spacing: Spacing,
    pub solver: SolverConfig,
}

impl Default for GapStudyConfig {
    fn default() -> Self {
        GapStudyConfig {
            t_end: 1.0,
            intervals_per_unit_x: 50.0,
            t_intervals: 400,
            spacing: Spacing::Uniform,
            solver: SolverConfig::default(),
        }
    }
}

pub const VANISHING_THRESHOLD: f64 = 1e-2;
pub const PERSISTENCE_TOLERANCE: f64 = 0.1;

/// Classifies a sequence of gaps (one per rung, ascending `x_max`).
pub fn classify_gaps(gaps: &[f64]) -> GapTrend {
    let Some(&last) = gaps.last() else {
        return GapTrend::Unresolved;
    };
    if gaps.windows(2).all(|w| w[1] <= w[0]) && last < VANISHING_THRESHOLD {
        return GapTrend::VanishingGap;
    }
    if let [.., prev, last] = gaps {
        if last >= &VANISHING_THRESHOLD && (last - prev).abs() <= PERSISTENCE_TOLERANCE * prev {
            return GapTrend::PersistentGap { level: *last };
        }
    }
    GapTrend::Unresolved
}

/// Solves under both boundary conditions for each `x_max` in the ladder and
/// records `|u_A(x, 0) − u_B(x, 0)|` at the reference points.
pub fn uniqueness_gap_study<E: Executor>(
    model: &VolatilityModel,
    payoff: &PayoffSpec,
    bcs: (&BoundarySpec, &BoundarySpec),
    ladder: &[f64],
    reference_xs: &[f64],
    config: &GapStudyConfig,
    exec: &E,
) -> Result<GapReport> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("x_max ladder must be nonempty and ascending".into()));
    }
    if let Some(x) = reference_xs.iter().find(|&&x| !(x >= 0.0 && x < ladder[0])) {
        return Err(Error::InvalidArgument(format!(
            "reference point {x} must lie in [0, {})",
            ladder[0]
        )));
    }
    let jobs: Vec<(usize, bool)> = (0..ladder.len()).flat_map(|k| [(k, false), (k, true)]).collect();
    let solutions = exec.map(jobs.len(), |job| -> Result<(usize, Vec<f64>)> {
        let (k, second) = jobs[job];
        let x_max = ladder[k];
        let x_intervals = (libm::ceil(config.intervals_per_unit_x * x_max) as usize).max(4);
        let grid = Grid::new(
            &GridConfig {
                x_max,
                x_intervals,
                t_intervals: config.t_intervals,
                spacing: config.spacing,
            },
            config.t_end,
        )?;
        let spec = if second { bcs.1 } else { bcs.0 };
        let bc = spec.instantiate(&grid)?;
        let sol = solve_cauchy(model, payoff, &grid, &bc, &config.solver)?;
        Ok((x_intervals, reference_xs.iter().map(|&x| sol.initial_value(x)).collect()))
    });
    let solutions = solutions.into_iter().collect::<Result<Vec<_>>>()?;
    let rungs: Vec<GapRung> = ladder
        .iter()
        .enumerate()
        .map(|(k, &x_max)| {
            let (x_intervals, a) = &solutions[2 * k];
            let (_, b) = &solutions[2 * k + 1];
            let points: Vec<(f64, f64, f64, f64)> = reference_xs
                .iter()
                .zip(a.iter().zip(b))
                .map(|(&x, (&ua, &ub))| (x, ua, ub, (ua - ub).abs()))
                .collect();
            let max_gap = points.iter().map(|p| p.3).fold(0.0, f64::max);
            GapRung {
                x_max,
                x_intervals: *x_intervals,
                points,
                max_gap,
            }
        })
        .collect();
    let gaps: Vec<f64> = rungs.iter().map(|r| r.max_gap).collect();
    Ok(GapReport {
        model: model.to_string(),
        payoff: payoff.to_string(),
        bc_pair: (bcs.0.name(), bcs.1.name()),
        trend: classify_gaps(&gaps),
        rungs,
    })
}
