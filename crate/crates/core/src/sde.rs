//! Simulation of `dX = σ(X) dW`, `X_t = x > 0`, absorbed at zero.
//!
//! Two schemes:
//!
//! * [`Scheme::EulerAbsorbed`]: `X ← X + σ(X)·√Δt·Z`, and the path is frozen
//!   at 0 for good the first time it becomes nonpositive.
//! * [`Scheme::InverseBesselExact`]: for `σ(x) = αx²` only. With the clock
//!   run at `α²` speed, `1/X` is a three-dimensional Bessel process, sampled
//!   exactly as the norm of a 3-d Brownian motion started at `(1/x, 0, 0)`.
//!
//! The Euler chain has conditional mean equal to its current state, so its
//! mean is exactly `x` at every step: it cannot show the martingale defect
//! of a strict local martingale. Defect estimation therefore insists on the
//! exact sampler unless the caller explicitly forces Euler.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::condition::psi;
use crate::math::pairwise_sum;
use crate::model::{GrowthClass, PayoffSpec, VolatilityModel};
use crate::rng::RngDescriptor;
use crate::{Error, Result};

/// Runs `n` independent jobs and returns their results in index order.
///
/// Implementations may run jobs concurrently; results must not depend on
/// how they are scheduled.
pub trait Executor {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every job on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, job: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(job).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerAbsorbed,
    InverseBesselExact,
}

/// Barrier levels `n`; `τn` is the first exit of `[1/n, n]`, capped at T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingSpec {
    levels: Vec<u32>,
}

impl StoppingSpec {
    pub fn new(mut levels: Vec<u32>) -> Result<Self> {
        if levels.is_empty() || levels.contains(&0) {
            return Err(Error::InvalidArgument(
                "stopping levels must be a nonempty list of positive integers".into(),
            ));
        }
        levels.sort_unstable();
        levels.dedup();
        Ok(StoppingSpec { levels })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierExit {
    pub level: u32,
    /// First grid value outside `(1/n, n)`; includes the discrete overshoot.
    pub value: f64,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub x0: f64,
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl SimParams {
    fn validate(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(Error::InvalidArgument(format!("x0 must be positive, got {}", self.x0)));
        }
        if !(self.t0 < self.t_end && self.t0.is_finite() && self.t_end.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need t0 < T, got t0 = {}, T = {}",
                self.t0, self.t_end
            )));
        }
        if self.n_steps == 0 || self.n_paths == 0 {
            return Err(Error::InvalidArgument("n_steps and n_paths must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBatch {
    pub x0: f64,
    pub t0: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub terminal_values: Vec<f64>,
    pub absorption_flags: Vec<bool>,
    /// Running maximum per path (Euler only; empty for the exact sampler).
    pub running_max: Vec<f64>,
    pub barrier_levels: Vec<u32>,
    /// Per path, one entry per barrier level.
    pub barrier_exits: Vec<Vec<Option<BarrierExit>>>,
    /// Paths dropped because a value exceeded [`OVERFLOW_LEVEL`].
    pub overflowed: usize,
    pub rng: RngDescriptor,
    pub warnings: Vec<String>,
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.terminal_values.len()
    }

    /// `X_{τn}` per path for the barrier at index `level_index`: the exit
    /// value if the path left `(1/n, n)`, else its terminal value.
    pub fn stopped_values(&self, level_index: usize) -> Vec<f64> {
        self.terminal_values
            .iter()
            .zip(&self.barrier_exits)
            .map(|(&xt, exits)| exits[level_index].map_or(xt, |e| e.value))
            .collect()
    }
}

pub const OVERFLOW_LEVEL: f64 = 1e300;
/// Beyond this state a non-finite σ is read as arithmetic overflow of a
/// runaway path (flagged like [`OVERFLOW_LEVEL`]), not as a model defect.
pub const OVERFLOW_STATE: f64 = 1e150;
/// Largest tolerated fraction of overflowed paths before a run is aborted.
pub const OVERFLOW_FRACTION: f64 = 1e-6;

struct PathRecord {
    terminal: f64,
    absorbed: bool,
    max: f64,
    exits: Vec<Option<BarrierExit>>,
    overflow: bool,
}

fn euler_path(
    model: &VolatilityModel,
    params: &SimParams,
    levels: &[u32],
    freeze_above: f64,
    rng: &RngDescriptor,
    index: usize,
) -> Result<PathRecord> {
    let dt = (params.t_end - params.t0) / params.n_steps as f64;
    let sqdt = libm::sqrt(dt);
    let mut stream = rng.path_stream(index as u64);
    let mut x = params.x0;
    let mut max = x;
    let mut absorbed = false;
    let mut exits = vec![None; levels.len()];
    let record_exits = |x: f64, time: f64, exits: &mut Vec<Option<BarrierExit>>| {
        for (slot, &n) in exits.iter_mut().zip(levels) {
            let n = n as f64;
            if slot.is_none() && (x >= n || x <= 1.0 / n) {
                *slot = Some(BarrierExit { level: n as u32, value: x, time });
            }
        }
    };
    record_exits(x, params.t0, &mut exits);
    let frozen = |x: f64, exits: &[Option<BarrierExit>]| {
        x >= freeze_above || exits.last().is_some_and(|e| e.is_some())
    };
    if frozen(x, &exits) {
        return Ok(PathRecord { terminal: x, absorbed: false, max: x, exits, overflow: false });
    }
    for k in 0..params.n_steps {
        let s = model.sigma(x);
        if !s.is_finite() {
            if x > OVERFLOW_STATE {
                break;
            }
            return Err(Error::Simulation(format!(
                "σ({x:e}) = {s} on path {index}, step {k}"
            )));
        }
        x += s * sqdt * stream.normal();
        if !(x.is_finite() && x <= OVERFLOW_LEVEL) {
            return Ok(PathRecord {
                terminal: f64::INFINITY,
                absorbed: false,
                max: f64::INFINITY,
                exits,
                overflow: true,
            });
        }
        if x <= 0.0 {
            x = 0.0;
            absorbed = true;
        }
        max = max.max(x);
        record_exits(x, params.t0 + (k + 1) as f64 * dt, &mut exits);
        if absorbed || frozen(x, &exits) {
            break;
        }
    }
    if x > OVERFLOW_STATE && !model.sigma(x).is_finite() {
        return Ok(PathRecord {
            terminal: f64::INFINITY,
            absorbed: false,
            max: f64::INFINITY,
            exits,
            overflow: true,
        });
    }
    Ok(PathRecord {
        terminal: x,
        absorbed,
        max,
        exits,
        overflow: false,
    })
}

fn assemble(
    params: &SimParams,
    scheme: Scheme,
    levels: Vec<u32>,
    rng: RngDescriptor,
    records: Vec<Result<PathRecord>>,
    keep_max: bool,
) -> Result<PathBatch> {
    let n = records.len();
    let mut batch = PathBatch {
        x0: params.x0,
        t0: params.t0,
        t_end: params.t_end,
        n_steps: params.n_steps,
        scheme,
        terminal_values: Vec::with_capacity(n),
        absorption_flags: Vec::with_capacity(n),
        running_max: Vec::new(),
        barrier_levels: levels,
        barrier_exits: Vec::new(),
        overflowed: 0,
        rng,
        warnings: Vec::new(),
    };
    for record in records {
        let r = record?;
        if r.overflow {
            batch.overflowed += 1;
            continue;
        }
        batch.terminal_values.push(r.terminal);
        batch.absorption_flags.push(r.absorbed);
        if keep_max {
            batch.running_max.push(r.max);
        }
        if !batch.barrier_levels.is_empty() {
            batch.barrier_exits.push(r.exits);
        }
    }
    if batch.overflowed > 0 {
        if batch.overflowed as f64 > OVERFLOW_FRACTION * n as f64 {
            return Err(Error::Simulation(format!(
                "{} of {n} paths exceeded {OVERFLOW_LEVEL:e}",
                batch.overflowed
            )));
        }
        batch.warnings.push(format!(
            "{} overflowing path(s) excluded",
            batch.overflowed
        ));
    }
    if batch.terminal_values.is_empty() {
        return Err(Error::Simulation("no path survived".into()));
    }
    Ok(batch)
}

/// Euler–Maruyama paths with absorption at zero.
///
/// With `barriers`, the first exit of `[1/n, n]` is recorded per level and
/// each path is frozen once it has left the widest interval, so
/// `terminal_values` then holds `X` stopped at the last exit time.
pub fn simulate_paths<E: Executor>(
    model: &VolatilityModel,
    params: &SimParams,
    barriers: Option<&StoppingSpec>,
    exec: &E,
) -> Result<PathBatch> {
    simulate_frozen(model, params, barriers, f64::INFINITY, exec)
}

fn simulate_frozen<E: Executor>(
    model: &VolatilityModel,
    params: &SimParams,
    barriers: Option<&StoppingSpec>,
    freeze_above: f64,
    exec: &E,
) -> Result<PathBatch> {
    params.validate()?;
    let levels: Vec<u32> = barriers.map(|b| b.levels.clone()).unwrap_or_default();
    let rng = RngDescriptor::new(params.seed);
    let records = exec.map(params.n_paths, |i| {
        euler_path(model, params, &levels, freeze_above, &rng, i)
    });
    assemble(params, Scheme::EulerAbsorbed, levels, rng, records, true)
}

/// Exact terminal values for `σ(x) = αx²` (α = 1 unless given).
pub fn inverse_bessel_exact<E: Executor>(
    alpha: f64,
    x0: f64,
    t0: f64,
    t_end: f64,
    n_paths: usize,
    seed: u64,
    exec: &E,
) -> Result<PathBatch> {
    let params = SimParams {
        x0,
        t0,
        t_end,
        n_steps: 1,
        n_paths,
        seed,
    };
    params.validate()?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    let horizon = libm::sqrt(alpha * alpha * (t_end - t0));
    let rng = RngDescriptor::new(seed);
    let start = 1.0 / x0;
    let records = exec.map(n_paths, |i| {
        let mut s = rng.path_stream(i as u64);
        let a = start + horizon * s.normal();
        let b = horizon * s.normal();
        let c = horizon * s.normal();
        let x = 1.0 / libm::sqrt(a * a + b * b + c * c);
        Ok(PathRecord {
            terminal: x,
            absorbed: false,
            max: x,
            exits: Vec::new(),
            overflow: !(x.is_finite() && x <= OVERFLOW_LEVEL),
        })
    });
    assemble(&params, Scheme::InverseBesselExact, Vec::new(), rng, records, false)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub ci95: (f64, f64),
    pub scheme: Option<Scheme>,
    pub n_steps: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl McEstimate {
    fn from_samples(samples: &[f64], scheme: Scheme, n_steps: usize, seed: u64) -> Self {
        let n = samples.len();
        let mean = pairwise_sum(samples) / n as f64;
        let stderr = if n > 1 {
            let dev: Vec<f64> = samples.iter().map(|v| (v - mean) * (v - mean)).collect();
            libm::sqrt(pairwise_sum(&dev) / (n - 1) as f64 / n as f64)
        } else {
            0.0
        };
        McEstimate {
            mean,
            stderr,
            n_paths: n,
            ci95: (mean - 1.96 * stderr, mean + 1.96 * stderr),
            scheme: Some(scheme),
            n_steps,
            seed,
            warnings: Vec::new(),
        }
    }

    fn exact(value: f64, seed: u64) -> Self {
        McEstimate {
            mean: value,
            stderr: 0.0,
            n_paths: 0,
            ci95: (value, value),
            scheme: None,
            n_steps: 0,
            seed,
            warnings: Vec::new(),
        }
    }

    /// `|mean − target| ≤ k·stderr`.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeChoice {
    /// Exact sampler when the model is `αx²`, Euler otherwise.
    Auto,
    Euler,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McParams {
    pub n_paths: usize,
    /// Euler steps per unit of time; at least one step is always taken.
    pub steps_per_unit_time: f64,
    pub seed: u64,
    pub scheme: SchemeChoice,
}

impl Default for McParams {
    fn default() -> Self {
        McParams {
            n_paths: 100_000,
            steps_per_unit_time: 2000.0,
            seed: 1,
            scheme: SchemeChoice::Auto,
        }
    }
}

impl McParams {
    pub fn n_steps(&self, horizon: f64) -> usize {
        (libm::ceil(self.steps_per_unit_time * horizon) as usize).max(1)
    }

    fn sim(&self, x: f64, t: f64, t_end: f64) -> SimParams {
        SimParams {
            x0: x,
            t0: t,
            t_end,
            n_steps: self.n_steps(t_end - t),
            n_paths: self.n_paths,
            seed: self.seed,
        }
    }
}

fn exact_alpha(model: &VolatilityModel) -> Option<f64> {
    match model.as_cev() {
        Some((alpha, 2.0)) => Some(alpha),
        _ => None,
    }
}

/// Terminal values at `T` from `X_t = x`: the exact sampler when the scheme
/// choice allows it and σ = αx², Euler otherwise.
pub fn terminal_batch<E: Executor>(
    model: &VolatilityModel,
    x: f64,
    t: f64,
    t_end: f64,
    params: &McParams,
    exec: &E,
) -> Result<PathBatch> {
    let exact = exact_alpha(model);
    match (params.scheme, exact) {
        (SchemeChoice::Auto | SchemeChoice::Exact, Some(alpha)) => {
            inverse_bessel_exact(alpha, x, t, t_end, params.n_paths, params.seed, exec)
        }
        (SchemeChoice::Exact, None) => Err(Error::SchemeRefused(format!(
            "no exact sampler for σ = {model}; only αx² has one"
        ))),
        _ => simulate_paths(model, &params.sim(x, t, t_end), None, exec),
    }
}

/// Monte Carlo estimate of `E g(X_T)` for `X_t = x`.
pub fn estimate_payoff_expectation<E: Executor>(
    model: &VolatilityModel,
    payoff: &PayoffSpec,
    x: f64,
    t: f64,
    t_end: f64,
    params: &McParams,
    exec: &E,
) -> Result<McEstimate> {
    if let Some(c) = payoff.constant_value() {
        return Ok(McEstimate::exact(c, params.seed));
    }
    let batch = terminal_batch(model, x, t, t_end, params, exec)?;
    let values: Vec<f64> = batch.terminal_values.iter().map(|&v| payoff.eval(v)).collect();
    let mut est = McEstimate::from_samples(&values, batch.scheme, batch.n_steps, params.seed);
    est.warnings = batch.warnings;
    if payoff.growth() == GrowthClass::Superlinear {
        est.warnings
            .push(format!("payoff {payoff} grows superlinearly; E g(X_T) may be infinite"));
    }
    Ok(est)
}

/// `u*(x, t) = x − E X_T`, the martingale defect.
///
/// Refuses the Euler scheme unless `force_euler` is set: the Euler chain's
/// mean is exactly `x`, so it reports a zero defect whatever σ is.
pub fn martingale_defect<E: Executor>(
    model: &VolatilityModel,
    x: f64,
    t: f64,
    t_end: f64,
    params: &McParams,
    force_euler: bool,
    exec: &E,
) -> Result<McEstimate> {
    let exact = exact_alpha(model).is_some() && params.scheme != SchemeChoice::Euler;
    if !exact && !force_euler {
        return Err(Error::SchemeRefused(format!(
            "defect of σ = {model} would need the Euler scheme, whose mean is exactly x; \
             pass force_euler to run it anyway"
        )));
    }
    let batch = terminal_batch(model, x, t, t_end, params, exec)?;
    let mut est = McEstimate::from_samples(&batch.terminal_values, batch.scheme, batch.n_steps, params.seed);
    est.mean = x - est.mean;
    est.ci95 = (est.mean - 1.96 * est.stderr, est.mean + 1.96 * est.stderr);
    est.warnings = batch.warnings;
    if !exact {
        est.warnings
            .push("forced Euler scheme: the discrete chain is a martingale, defect biased to 0".into());
    }
    Ok(est)
}

/// Lower bounds `E[g(X_T)·1{max X < n}]` for each barrier `n` in `ladder`,
/// increasing to the minimal solution `E g(X_T)` as `n → ∞`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_minimal_price<E: Executor>(
    model: &VolatilityModel,
    payoff: &PayoffSpec,
    x: f64,
    t: f64,
    t_end: f64,
    ladder: &[f64],
    params: &McParams,
    exec: &E,
) -> Result<Vec<McEstimate>> {
    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("barrier ladder must be nonempty and ascending".into()));
    }
    // a path reaching the top barrier contributes nothing at any level
    let top = ladder[ladder.len() - 1];
    let batch = simulate_frozen(model, &params.sim(x, t, t_end), None, top, exec)?;
    let payoffs: Vec<f64> = batch.terminal_values.iter().map(|&v| payoff.eval(v)).collect();
    Ok(ladder
        .iter()
        .map(|&level| {
            let killed: Vec<f64> = payoffs
                .iter()
                .zip(&batch.running_max)
                .map(|(&g, &m)| if m < level { g } else { 0.0 })
                .collect();
            let mut est = McEstimate::from_samples(&killed, batch.scheme, batch.n_steps, params.seed);
            est.warnings = batch.warnings.clone();
            est
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiBoundRow {
    pub level: u32,
    pub estimate: McEstimate,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsiBoundReport {
    pub model: String,
    pub psi_x: f64,
    /// `Ψ(x) + x(T − t)/2`.
    pub bound: f64,
    pub rows: Vec<PsiBoundRow>,
    pub all_pass: bool,
}

/// Checks `E Ψ(X_{τn}) ≤ Ψ(x) + x(T − t)/2` per level; a level passes when
/// the estimate is at most the bound plus three standard errors.
pub fn psi_bound_check<E: Executor>(
    model: &VolatilityModel,
    x: f64,
    t: f64,
    t_end: f64,
    stopping: &StoppingSpec,
    params: &McParams,
    exec: &E,
) -> Result<PsiBoundReport> {
    let psi_x = psi(model, x)?;
    if t_end < t {
        return Err(Error::InvalidArgument(format!("need t ≤ T, got t = {t}, T = {t_end}")));
    }
    let bound = psi_x + 0.5 * x * (t_end - t);
    let rows = if t_end == t {
        stopping
            .levels()
            .iter()
            .map(|&level| PsiBoundRow {
                level,
                estimate: McEstimate::exact(psi_x, params.seed),
                pass: true,
            })
            .collect()
    } else {
        let batch = simulate_paths(model, &params.sim(x, t, t_end), Some(stopping), exec)?;
        let mut rows = Vec::with_capacity(stopping.levels().len());
        for (j, &level) in stopping.levels().iter().enumerate() {
            let values = batch
                .stopped_values(j)
                .into_iter()
                .map(|v| psi(model, v))
                .collect::<Result<Vec<f64>>>()?;
            let mut estimate = McEstimate::from_samples(&values, batch.scheme, batch.n_steps, params.seed);
            estimate.warnings = batch.warnings.clone();
            let pass = estimate.mean <= bound + 3.0 * estimate.stderr;
            rows.push(PsiBoundRow { level, estimate, pass });
        }
        rows
    };
    Ok(PsiBoundReport {
        model: alloc::string::ToString::to_string(model),
        psi_x,
        bound,
        all_pass: rows.iter().all(|r| r.pass),
        rows,
    })
}
