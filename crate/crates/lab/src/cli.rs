//! The `cauchy-lab` command line.
//!
//! Every subcommand resolves a [`ScenarioConfig`] (defaults, then `--config`,
//! then flags), runs, and prints either a short human summary or, with
//! `--json`, the report envelope. With `--out` (or `[output] dir`) the
//! envelope and the CSV tables are also written to disk.
//!
//! Exit codes: 0 ok or martingale, 1 usage error, 2 strict local
//! martingale, 3 inconclusive.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use cauchy_lab_core::condition::{classify_martingale, psi_growth_profile, ClassifyOptions, Verdict};
use cauchy_lab_core::model::{
    classify_growth, parse_payoff, parse_volatility, validate_assumptions, PayoffKind, PayoffSpec, ProbeGrid,
    VolatilityModel,
};
use cauchy_lab_core::pde::{
    extrapolate_ladder, solve_cauchy, uniqueness_gap_study, BoundarySpec, GapStudyConfig, Grid, GridConfig,
    SolverConfig, Spacing,
};
use cauchy_lab_core::sde::{
    estimate_minimal_price, martingale_defect, psi_bound_check, terminal_batch, McParams, SchemeChoice,
    StoppingSpec,
};

use crate::config::ScenarioConfig;
use crate::exec::Parallel;
use crate::output::{write_artifacts, Envelope, Table};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_STRICT_LOCAL: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "cauchy-lab", version, about = "Martingale test, defect and uniqueness experiments for u_t + ½σ²u_xx = 0")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Integral test ∫₁^∞ x/σ²(x) dx: martingale or strict local martingale
    Check(Opts),
    /// Monte Carlo estimate of the defect x − E X_T
    Defect(Opts),
    /// Solve the Cauchy problem on a truncated grid
    Solve(Opts),
    /// Compare solutions under two far-field conditions as x_max grows
    Nonuniq(Opts),
    /// Ψ(x)/x along a grid
    Psi(Opts),
    /// Simulate terminal values
    Simulate(Opts),
    /// Check E Ψ(X_τn) ≤ Ψ(x) + x(T − t)/2 by Monte Carlo
    Psibound(Opts),
    /// Probe the standing assumptions on σ and the payoff growth
    Validate(Opts),
}

impl Command {
    fn parts(&self) -> (&'static str, &Opts) {
        match self {
            Command::Check(o) => ("check", o),
            Command::Defect(o) => ("defect", o),
            Command::Solve(o) => ("solve", o),
            Command::Nonuniq(o) => ("nonuniq", o),
            Command::Psi(o) => ("psi", o),
            Command::Simulate(o) => ("simulate", o),
            Command::Psibound(o) => ("psibound", o),
            Command::Validate(o) => ("validate", o),
        }
    }
}

/// Flags shared by all subcommands; each overrides the matching config key.
#[derive(Args, Debug, Clone, Default)]
#[command(allow_negative_numbers = true)]
pub struct Opts {
    /// INI scenario file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Volatility: `cev:[alpha=a,]p=p`, `table:x=v,...` or an expression in x
    #[arg(long, allow_hyphen_values = true)]
    pub sigma: Option<String>,
    /// Payoff: `identity`, `call:K=k`, `put:K=k`, `const:c` or an expression in x
    #[arg(long, allow_hyphen_values = true)]
    pub payoff: Option<String>,
    #[arg(long)]
    pub x: Option<f64>,
    #[arg(long = "t")]
    pub t: Option<f64>,
    #[arg(long = "T")]
    pub t_end: Option<f64>,
    /// Print the JSON report instead of the summary
    #[arg(long)]
    pub json: bool,
    /// Worker threads (default: all cores)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Refuse randomized runs without an explicit seed
    #[arg(long)]
    pub strict_repro: bool,
    /// Directory for report.json and CSV tables
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// check: fit the tail numerically even for CEV
    #[arg(long)]
    pub numeric: bool,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    /// Euler steps per unit of time
    #[arg(long)]
    pub steps_per_unit: Option<f64>,
    /// auto | euler | exact
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub force_euler: bool,
    /// Stopping levels n of τn (psibound)
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<u32>>,
    /// Kill barriers of the Monte Carlo minimal profile, as multiples of x_max
    #[arg(long, value_delimiter = ',')]
    pub barriers: Option<Vec<f64>>,

    #[arg(long)]
    pub x_max: Option<f64>,
    #[arg(long)]
    pub x_intervals: Option<usize>,
    #[arg(long)]
    pub t_intervals: Option<usize>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub startup_steps: Option<usize>,
    /// dirichlet-payoff | zero-gamma | minimal-profile
    #[arg(long)]
    pub bc: Option<String>,
    /// uniform | log-uniform
    #[arg(long)]
    pub spacing: Option<String>,
    /// x_max ladder (nonuniq)
    #[arg(long, value_delimiter = ',')]
    pub ladder: Option<Vec<f64>>,
    /// Space intervals per unit of x_max (nonuniq)
    #[arg(long)]
    pub intervals_per_unit: Option<f64>,
    /// Two boundary conditions to compare (nonuniq)
    #[arg(long, value_delimiter = ',')]
    pub bc_pair: Option<Vec<String>>,
    /// Points where u is reported
    #[arg(long, value_delimiter = ',')]
    pub probes: Option<Vec<f64>>,
    /// Grid for psi
    #[arg(long, value_delimiter = ',')]
    pub psi_xs: Option<Vec<f64>>,
}

/// A finished command: exit code, stdout text, and artifacts.
#[derive(Debug)]
pub struct Outcome {
    pub exit: i32,
    pub stdout: String,
    pub json: String,
    pub tables: Vec<Table>,
    pub warnings: Vec<String>,
}

pub fn resolve_config(opts: &Opts) -> anyhow::Result<ScenarioConfig> {
    let mut cfg = match &opts.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::from_ini(&text).with_context(|| format!("in {}", path.display()))?
        }
        None => ScenarioConfig::default(),
    };
    macro_rules! over {
        ($flag:expr => $field:expr) => {
            if let Some(v) = &$flag {
                $field = v.clone();
            }
        };
    }
    over!(opts.sigma => cfg.sigma);
    over!(opts.payoff => cfg.payoff);
    over!(opts.x => cfg.x);
    over!(opts.t => cfg.t);
    over!(opts.t_end => cfg.t_end);
    over!(opts.psi_xs => cfg.psi_xs);
    over!(opts.paths => cfg.mc.paths);
    over!(opts.steps_per_unit => cfg.mc.steps_per_unit);
    over!(opts.barriers => cfg.mc.ladder);
    over!(opts.levels => cfg.mc.levels);
    over!(opts.scheme => cfg.mc.scheme);
    over!(opts.x_max => cfg.pde.x_max);
    over!(opts.x_intervals => cfg.pde.x_intervals);
    over!(opts.t_intervals => cfg.pde.t_intervals);
    over!(opts.theta => cfg.pde.theta);
    over!(opts.startup_steps => cfg.pde.startup_steps);
    over!(opts.bc => cfg.pde.bc);
    over!(opts.spacing => cfg.pde.spacing);
    over!(opts.ladder => cfg.pde.ladder);
    over!(opts.intervals_per_unit => cfg.pde.intervals_per_unit);
    over!(opts.bc_pair => cfg.pde.bc_pair);
    over!(opts.probes => cfg.pde.probes);
    if opts.seed.is_some() {
        cfg.mc.seed = opts.seed;
    }
    if let Some(dir) = &opts.out {
        cfg.output.dir = Some(dir.display().to_string());
    }
    cfg.numeric |= opts.numeric;
    cfg.mc.force_euler |= opts.force_euler;
    Ok(cfg)
}

struct Ctx {
    cfg: ScenarioConfig,
    strict: bool,
    exec: Parallel,
    warnings: Vec<String>,
    tables: Vec<Table>,
}

impl Ctx {
    fn seed(&mut self) -> anyhow::Result<u64> {
        if let Some(s) = self.cfg.mc.seed {
            return Ok(s);
        }
        if self.strict {
            bail!("--strict-repro needs an explicit seed (--seed or [mc] seed)");
        }
        let s = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        self.cfg.mc.seed = Some(s);
        self.warnings.push(format!("no seed given, drew {s} from the clock"));
        Ok(s)
    }

    fn mc(&mut self) -> anyhow::Result<McParams> {
        let seed = self.seed()?;
        let scheme = match self.cfg.mc.scheme.as_str() {
            "auto" => SchemeChoice::Auto,
            "euler" => SchemeChoice::Euler,
            "exact" => SchemeChoice::Exact,
            other => bail!("unknown scheme '{other}' (auto, euler, exact)"),
        };
        Ok(McParams {
            n_paths: self.cfg.mc.paths,
            steps_per_unit_time: self.cfg.mc.steps_per_unit,
            seed,
            scheme,
        })
    }

    fn model(&self) -> anyhow::Result<VolatilityModel> {
        parse_volatility(&self.cfg.sigma).with_context(|| format!("sigma '{}'", self.cfg.sigma))
    }

    fn payoff(&self) -> anyhow::Result<PayoffSpec> {
        parse_payoff(&self.cfg.payoff).with_context(|| format!("payoff '{}'", self.cfg.payoff))
    }

    fn spacing(&self) -> anyhow::Result<Spacing> {
        Ok(match self.cfg.pde.spacing.as_str() {
            "uniform" => Spacing::Uniform,
            "log-uniform" => Spacing::LogUniform,
            other => bail!("unknown spacing '{other}' (uniform, log-uniform)"),
        })
    }

    fn solver(&self) -> SolverConfig {
        SolverConfig {
            theta: self.cfg.pde.theta,
            startup_steps: self.cfg.pde.startup_steps,
        }
    }

    /// Far-field recipe by name. `minimal-profile` is the closed form for the
    /// identity payoff under αx², and otherwise the killed-path Monte Carlo
    /// price at each `x_max` in `x_maxes`, extrapolated over the barrier
    /// ladder and interpolated linearly in t.
    fn boundary(
        &mut self,
        name: &str,
        model: &VolatilityModel,
        payoff: &PayoffSpec,
        t_end: f64,
        x_maxes: &[f64],
    ) -> anyhow::Result<BoundarySpec> {
        Ok(match name {
            "dirichlet-payoff" => BoundarySpec::DirichletPayoff,
            "zero-gamma" => BoundarySpec::ZeroGamma,
            "minimal-profile" => match (model.as_cev(), payoff.kind()) {
                (Some((alpha, 2.0)), PayoffKind::Identity) => {
                    BoundarySpec::minimal_identity_cev2(alpha, t_end)
                }
                _ => self.mc_profile(model, payoff, t_end, x_maxes)?,
            },
            other => bail!("unknown boundary condition '{other}' (dirichlet-payoff, zero-gamma, minimal-profile)"),
        })
    }

    fn mc_profile(
        &mut self,
        model: &VolatilityModel,
        payoff: &PayoffSpec,
        t_end: f64,
        x_maxes: &[f64],
    ) -> anyhow::Result<BoundarySpec> {
        const T_SAMPLES: usize = 5;
        let params = self.mc()?;
        let ts: Vec<f64> = (0..T_SAMPLES).map(|k| t_end * k as f64 / (T_SAMPLES - 1) as f64).collect();
        let mut profiles = Vec::with_capacity(x_maxes.len());
        for &x_max in x_maxes {
            let ladder: Vec<f64> = self.cfg.mc.ladder.iter().map(|m| m * x_max).collect();
            let mut values = Vec::with_capacity(ts.len());
            for &t in &ts {
                if t >= t_end {
                    values.push(payoff.eval(x_max));
                    continue;
                }
                let ests = estimate_minimal_price(model, payoff, x_max, t, t_end, &ladder, &params, &self.exec)?;
                let means: Vec<f64> = ests.iter().map(|e| e.mean).collect();
                values.push(extrapolate_ladder(&means));
            }
            profiles.push((x_max, values));
        }
        self.warnings.push(format!(
            "minimal-profile for σ = {model} estimated by Monte Carlo ({} paths) at {T_SAMPLES} times",
            params.n_paths
        ));
        Ok(BoundarySpec::profile("minimal_profile_mc", move |x_max, t| {
            let Some((_, values)) = profiles.iter().find(|(xm, _)| (xm - x_max).abs() <= 1e-12 * xm) else {
                return f64::NAN;
            };
            let s = (t / t_end * (T_SAMPLES - 1) as f64).clamp(0.0, (T_SAMPLES - 1) as f64);
            let k = (s.floor() as usize).min(T_SAMPLES - 2);
            let w = s - k as f64;
            values[k] + w * (values[k + 1] - values[k])
        }))
    }
}

fn row_line<T: std::fmt::Display>(out: &mut String, label: &str, v: T) {
    let _ = writeln!(out, "{label:<16}{v}");
}

fn run_check(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = ctx.model()?;
    let opts = ClassifyOptions {
        symbolic: !ctx.cfg.numeric,
        ..ClassifyOptions::default()
    };
    let report = classify_martingale(&model, opts)?;
    let exit = match report.verdict {
        Verdict::Martingale => EXIT_OK,
        Verdict::StrictLocalMartingale => EXIT_STRICT_LOCAL,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    };
    let mut table = Table::new("partial_integrals", &["B", "partial"]);
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    row_line(&mut s, "verdict", report.summary());
    if let Some(fit) = &report.tail_exponent {
        row_line(
            &mut s,
            "tail beta",
            format!("{:.4} in [{:.4}, {:.4}]", fit.beta, fit.band.0, fit.band.1),
        );
    }
    let _ = writeln!(s, "{:<16}int_1^B x/sigma^2", "B");
    for &(b, v) in &report.partial_integrals {
        table.push(vec![b, v]);
        let _ = writeln!(s, "{b:<16e}{v:.10}");
    }
    ctx.tables.push(table);
    Ok((serde_json::to_value(&report)?, s, exit))
}

fn run_defect(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = ctx.model()?;
    let params = ctx.mc()?;
    let (x, t, t_end) = (ctx.cfg.x, ctx.cfg.t, ctx.cfg.t_end);
    let exact = matches!(model.as_cev(), Some((_, p)) if p == 2.0) && params.scheme != SchemeChoice::Euler;
    let mut force = ctx.cfg.mc.force_euler;
    if !exact && !force {
        let cond = classify_martingale(&model, ClassifyOptions::default())?;
        if cond.verdict == Verdict::Martingale {
            force = true;
            ctx.warnings.push(format!(
                "σ = {model} passes the integral test, so the defect is 0; running the Euler scheme anyway"
            ));
        }
    }
    let est = martingale_defect(&model, x, t, t_end, &params, force, &ctx.exec)?;
    ctx.warnings.extend(est.warnings.iter().cloned());
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    row_line(&mut s, "defect", format!("{:.6} ± {:.6}", est.mean, est.stderr));
    row_line(&mut s, "ci95", format!("[{:.6}, {:.6}]", est.ci95.0, est.ci95.1));
    row_line(&mut s, "scheme", est.scheme.map_or("none (exact value)".into(), |sc| format!("{sc:?}")));
    row_line(&mut s, "paths", est.n_paths);
    row_line(&mut s, "seed", est.seed);
    Ok((serde_json::to_value(&est)?, s, EXIT_OK))
}

#[derive(Serialize)]
struct SolveResult {
    model: String,
    payoff: String,
    bc: String,
    theta: f64,
    startup_steps: usize,
    x_max: f64,
    x_intervals: usize,
    t_intervals: usize,
    spacing: Spacing,
    diagnostics: cauchy_lab_core::pde::SolverDiagnostics,
    t: f64,
    /// `(x, u(x, t))` at the probe points.
    probes: Vec<(f64, f64)>,
}

fn run_solve(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = ctx.model()?;
    let payoff = ctx.payoff()?;
    let pde = ctx.cfg.pde.clone();
    let grid = Grid::new(
        &GridConfig {
            x_max: pde.x_max,
            x_intervals: pde.x_intervals,
            t_intervals: pde.t_intervals,
            spacing: ctx.spacing()?,
        },
        ctx.cfg.t_end,
    )?;
    let spec = ctx.boundary(&pde.bc, &model, &payoff, ctx.cfg.t_end, &[pde.x_max])?;
    let bc = spec.instantiate(&grid)?;
    let sol = solve_cauchy(&model, &payoff, &grid, &bc, &ctx.solver())?;

    let t = ctx.cfg.t;
    let mut surface = Table::new("surface", &["x", "t", "u"]);
    for (j, row) in sol.values.iter().enumerate() {
        for (i, &u) in row.iter().enumerate() {
            surface.push(vec![grid.x_nodes[i], grid.t_nodes[j], u]);
        }
    }
    let mut probe_table = Table::new("probes", &["x", "u"]);
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    row_line(&mut s, "payoff", &payoff);
    row_line(&mut s, "bc", spec.name());
    let mut probes = Vec::new();
    for &x in &pde.probes {
        let u = sol.value_at(x, t);
        probes.push((x, u));
        probe_table.push(vec![x, u]);
        let _ = writeln!(s, "u({x}, {t}) = {u:.6}");
    }
    ctx.tables.push(surface);
    ctx.tables.push(probe_table);
    let result = SolveResult {
        model: sol.model.clone(),
        payoff: sol.payoff.clone(),
        bc: spec.name(),
        theta: sol.theta,
        startup_steps: sol.startup_steps,
        x_max: pde.x_max,
        x_intervals: pde.x_intervals,
        t_intervals: pde.t_intervals,
        spacing: grid.spacing,
        diagnostics: sol.diagnostics.clone(),
        t,
        probes,
    };
    Ok((serde_json::to_value(&result)?, s, EXIT_OK))
}

fn run_nonuniq(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = ctx.model()?;
    let payoff = ctx.payoff()?;
    let pde = ctx.cfg.pde.clone();
    let (a, b) = match pde.bc_pair.as_slice() {
        [a, b] => (a.clone(), b.clone()),
        [] => {
            let cond = classify_martingale(&model, ClassifyOptions::default())?;
            let second = if cond.verdict == Verdict::StrictLocalMartingale {
                "minimal-profile"
            } else {
                "zero-gamma"
            };
            ctx.cfg.pde.bc_pair = vec!["dirichlet-payoff".into(), second.into()];
            ("dirichlet-payoff".to_string(), second.to_string())
        }
        other => bail!("bc_pair needs exactly two entries, got {}", other.len()),
    };
    // time-homogeneous: solving on [0, T − t] and reading row 0 gives u(·, t)
    let horizon = ctx.cfg.t_end - ctx.cfg.t;
    let spec_a = ctx.boundary(&a, &model, &payoff, horizon, &pde.ladder)?;
    let spec_b = ctx.boundary(&b, &model, &payoff, horizon, &pde.ladder)?;
    let config = GapStudyConfig {
        t_end: horizon,
        intervals_per_unit_x: pde.intervals_per_unit,
        t_intervals: pde.t_intervals,
        spacing: ctx.spacing()?,
        solver: ctx.solver(),
    };
    let report = uniqueness_gap_study(&model, &payoff, (&spec_a, &spec_b), &pde.ladder, &pde.probes, &config, &ctx.exec)?;

    let mut gaps = Table::new("gaps", &["x_max", "gap"]);
    let mut points = Table::new("gap_points", &["x_max", "x", "u_a", "u_b", "gap"]);
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    row_line(&mut s, "payoff", &payoff);
    row_line(&mut s, "bc pair", format!("{} vs {}", report.bc_pair.0, report.bc_pair.1));
    let _ = writeln!(s, "{:<16}max gap", "x_max");
    for rung in &report.rungs {
        gaps.push(vec![rung.x_max, rung.max_gap]);
        for &(x, ua, ub, g) in &rung.points {
            points.push(vec![rung.x_max, x, ua, ub, g]);
        }
        let _ = writeln!(s, "{:<16}{:.6e}", rung.x_max, rung.max_gap);
    }
    row_line(&mut s, "trend", format!("{:?}", report.trend));
    ctx.tables.push(gaps);
    ctx.tables.push(points);
    Ok((serde_json::to_value(&report)?, s, EXIT_OK))
}

fn run_psi(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = ctx.model()?;
    let profile = psi_growth_profile(&model, &ctx.cfg.psi_xs)?;
    let mut table = Table::new("psi", &["x", "ratio"]);
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    let _ = writeln!(s, "{:<16}psi(x)/x", "x");
    for &(x, r) in &profile.points {
        table.push(vec![x, r]);
        let _ = writeln!(s, "{x:<16}{r:.8}");
    }
    row_line(&mut s, "trend", format!("{:?}", profile.trend));
    ctx.tables.push(table);
    Ok((serde_json::to_value(&profile)?, s, EXIT_OK))
}

#[derive(Serialize)]
struct SimulateResult {
    model: String,
    scheme: cauchy_lab_core::sde::Scheme,
    n_paths: usize,
    n_steps: usize,
    mean: f64,
    stderr: f64,
    absorbed_fraction: f64,
    overflowed: usize,
    rng: cauchy_lab_core::rng::RngDescriptor,
}

fn run_simulate(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = ctx.model()?;
    let params = ctx.mc()?;
    let batch = terminal_batch(&model, ctx.cfg.x, ctx.cfg.t, ctx.cfg.t_end, &params, &ctx.exec)?;
    ctx.warnings.extend(batch.warnings.iter().cloned());
    let n = batch.n_paths();
    let mean = batch.terminal_values.iter().sum::<f64>() / n as f64;
    let var = batch.terminal_values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n.max(2) - 1) as f64;
    let absorbed = batch.absorption_flags.iter().filter(|&&a| a).count();
    let result = SimulateResult {
        model: model.to_string(),
        scheme: batch.scheme,
        n_paths: n,
        n_steps: batch.n_steps,
        mean,
        stderr: (var / n as f64).sqrt(),
        absorbed_fraction: absorbed as f64 / n as f64,
        overflowed: batch.overflowed,
        rng: batch.rng,
    };
    let mut table = Table::new("terminal", &["x_T"]);
    for &v in &batch.terminal_values {
        table.push(vec![v]);
    }
    ctx.tables.push(table);
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    row_line(&mut s, "scheme", format!("{:?}", result.scheme));
    row_line(&mut s, "paths", n);
    row_line(&mut s, "mean X_T", format!("{:.6} ± {:.6}", result.mean, result.stderr));
    row_line(&mut s, "absorbed", format!("{:.4}", result.absorbed_fraction));
    Ok((serde_json::to_value(&result)?, s, EXIT_OK))
}

fn run_psibound(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = ctx.model()?;
    let params = ctx.mc()?;
    let stopping = StoppingSpec::new(ctx.cfg.mc.levels.clone())?;
    let report = psi_bound_check(&model, ctx.cfg.x, ctx.cfg.t, ctx.cfg.t_end, &stopping, &params, &ctx.exec)?;
    let mut table = Table::new("psibound", &["n", "estimate", "stderr", "bound", "pass"]);
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    row_line(&mut s, "bound", format!("{:.6}", report.bound));
    let _ = writeln!(s, "{:<16}E psi(X_tau_n)", "n");
    for row in &report.rows {
        table.push(vec![
            f64::from(row.level),
            row.estimate.mean,
            row.estimate.stderr,
            report.bound,
            f64::from(u8::from(row.pass)),
        ]);
        let _ = writeln!(
            s,
            "{:<16}{:.6} ± {:.6}  {}",
            row.level,
            row.estimate.mean,
            row.estimate.stderr,
            if row.pass { "ok" } else { "EXCEEDS" }
        );
    }
    if let Some(row) = report.rows.first() {
        ctx.warnings.extend(row.estimate.warnings.iter().cloned());
    }
    ctx.tables.push(table);
    Ok((serde_json::to_value(&report)?, s, EXIT_OK))
}

fn run_validate(ctx: &mut Ctx) -> anyhow::Result<(serde_json::Value, String, i32)> {
    let model = VolatilityModel::parse_unchecked(&ctx.cfg.sigma).with_context(|| format!("sigma '{}'", ctx.cfg.sigma))?;
    let payoff = ctx.payoff()?;
    let probe = ProbeGrid::default();
    let assumptions = validate_assumptions(&model, &probe)?;
    let growth = classify_growth(&payoff, &probe);
    let mut s = String::new();
    row_line(&mut s, "sigma", &model);
    row_line(&mut s, "positive", assumptions.positivity_ok);
    row_line(&mut s, "1/σ² loc. int.", assumptions.local_integrability_ok);
    row_line(
        &mut s,
        "holder ½",
        format!("{} (min exponent {:?})", assumptions.holder_half_estimate.pass, assumptions.holder_half_estimate.min_exponent),
    );
    row_line(&mut s, "payoff", &payoff);
    row_line(&mut s, "growth", format!("{:?}", growth.class));
    for note in &assumptions.notes {
        ctx.warnings.push(note.clone());
    }
    let result = serde_json::json!({ "assumptions": assumptions, "payoff_growth": growth });
    Ok((result, s, EXIT_OK))
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> anyhow::Result<Outcome> {
    let (name, opts) = cli.command.parts();
    let mut ctx = Ctx {
        cfg: resolve_config(opts)?,
        strict: opts.strict_repro,
        exec: Parallel::new(opts.threads)?,
        warnings: Vec::new(),
        tables: Vec::new(),
    };
    let (result, text, exit) = match &cli.command {
        Command::Check(_) => run_check(&mut ctx),
        Command::Defect(_) => run_defect(&mut ctx),
        Command::Solve(_) => run_solve(&mut ctx),
        Command::Nonuniq(_) => run_nonuniq(&mut ctx),
        Command::Psi(_) => run_psi(&mut ctx),
        Command::Simulate(_) => run_simulate(&mut ctx),
        Command::Psibound(_) => run_psibound(&mut ctx),
        Command::Validate(_) => run_validate(&mut ctx),
    }?;
    let json = serde_json::to_string_pretty(&Envelope::new(name, &ctx.cfg, &result, &ctx.warnings))?;
    if let Some(dir) = &ctx.cfg.output.dir {
        write_artifacts(dir.as_ref(), &ctx.cfg.output.formats, &json, &ctx.tables)?;
    }
    let stdout = if opts.json { json.clone() } else { text };
    Ok(Outcome {
        exit,
        stdout,
        json,
        tables: ctx.tables,
        warnings: ctx.warnings,
    })
}

/// Parses `args`, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            let mut text = out.stdout;
            if !text.ends_with('\n') {
                text.push('\n');
            }
            // a closed pipe (e.g. `| head`) is not an error
            let _ = std::io::stdout().write_all(text.as_bytes());
            out.exit
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
    }
}
