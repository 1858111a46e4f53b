//! Scenario configuration and its INI form.
//!
//! ```ini
//! sigma = cev:p=2
//! payoff = identity
//! x = 1
//! t = 0
//! T = 1
//!
//! [mc]
//! paths = 100000
//! seed = 7
//!
//! [pde]
//! x_max = 16
//! bc = dirichlet-payoff
//! ```
//!
//! Keys before the first section belong to the scenario itself. Lists are
//! comma separated, `#` and `;` start comment lines. Every key is optional;
//! omitted keys take the defaults of [`ScenarioConfig::default`].

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps_per_unit: f64,
    /// Required for randomized commands under `--strict-repro`.
    pub seed: Option<u64>,
    /// Kill barriers of the Monte Carlo minimal profile, as multiples of x_max.
    pub ladder: Vec<f64>,
    /// Stopping levels n for τn.
    pub levels: Vec<u32>,
    /// auto | euler | exact
    pub scheme: String,
    pub force_euler: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            paths: 100_000,
            steps_per_unit: 2000.0,
            seed: None,
            ladder: vec![2.0, 4.0, 8.0, 16.0],
            levels: vec![2, 4, 8, 16],
            scheme: "auto".into(),
            force_euler: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeConfig {
    pub x_max: f64,
    pub x_intervals: usize,
    pub t_intervals: usize,
    pub theta: f64,
    pub startup_steps: usize,
    /// dirichlet-payoff | zero-gamma | minimal-profile
    pub bc: String,
    /// uniform | log-uniform
    pub spacing: String,
    /// x_max ladder of the gap study.
    pub ladder: Vec<f64>,
    /// Resolution of the gap study per unit of x_max.
    pub intervals_per_unit: f64,
    /// Boundary-condition pair of the gap study; empty picks one from the
    /// condition verdict.
    pub bc_pair: Vec<String>,
    /// Points where u(x, t) is reported.
    pub probes: Vec<f64>,
}

impl Default for PdeConfig {
    fn default() -> Self {
        PdeConfig {
            x_max: 16.0,
            x_intervals: 800,
            t_intervals: 800,
            theta: 0.5,
            startup_steps: 4,
            bc: "dirichlet-payoff".into(),
            spacing: "uniform".into(),
            ladder: vec![8.0, 16.0, 32.0],
            intervals_per_unit: 50.0,
            bc_pair: Vec::new(),
            probes: vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Directory for CSV/JSON artifacts; nothing is written when unset.
    pub dir: Option<String>,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            formats: vec!["csv".into(), "json".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub sigma: String,
    pub payoff: String,
    pub x: f64,
    pub t: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
    /// Grid for `psi`.
    pub psi_xs: Vec<f64>,
    /// `check` skips closed-form recognition and fits the tail numerically.
    pub numeric: bool,
    pub mc: McConfig,
    pub pde: PdeConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            sigma: "x".into(),
            payoff: "identity".into(),
            x: 1.0,
            t: 0.0,
            t_end: 1.0,
            psi_xs: vec![1.0, 10.0, 100.0, 1000.0, 10000.0],
            numeric: false,
            mc: McConfig::default(),
            pde: PdeConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: std::str::FromStr>(s: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|e| anyhow!("'{p}': {e}")))
        .collect()
}

fn parse_bool(s: &str) -> anyhow::Result<bool> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => bail!("expected a boolean, got '{other}'"),
    }
}

impl ScenarioConfig {
    pub fn to_ini(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "payoff = {}", self.payoff);
        let _ = writeln!(s, "x = {}", self.x);
        let _ = writeln!(s, "t = {}", self.t);
        let _ = writeln!(s, "T = {}", self.t_end);
        let _ = writeln!(s, "psi_xs = {}", list(&self.psi_xs));
        let _ = writeln!(s, "numeric = {}", self.numeric);
        let mc = &self.mc;
        let _ = writeln!(s, "\n[mc]");
        let _ = writeln!(s, "paths = {}", mc.paths);
        let _ = writeln!(s, "steps_per_unit = {}", mc.steps_per_unit);
        if let Some(seed) = mc.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "ladder = {}", list(&mc.ladder));
        let _ = writeln!(s, "levels = {}", list(&mc.levels));
        let _ = writeln!(s, "scheme = {}", mc.scheme);
        let _ = writeln!(s, "force_euler = {}", mc.force_euler);
        let pde = &self.pde;
        let _ = writeln!(s, "\n[pde]");
        let _ = writeln!(s, "x_max = {}", pde.x_max);
        let _ = writeln!(s, "x_intervals = {}", pde.x_intervals);
        let _ = writeln!(s, "t_intervals = {}", pde.t_intervals);
        let _ = writeln!(s, "theta = {}", pde.theta);
        let _ = writeln!(s, "startup_steps = {}", pde.startup_steps);
        let _ = writeln!(s, "bc = {}", pde.bc);
        let _ = writeln!(s, "spacing = {}", pde.spacing);
        let _ = writeln!(s, "ladder = {}", list(&pde.ladder));
        let _ = writeln!(s, "intervals_per_unit = {}", pde.intervals_per_unit);
        let _ = writeln!(s, "bc_pair = {}", pde.bc_pair.join(","));
        let _ = writeln!(s, "probes = {}", list(&pde.probes));
        let _ = writeln!(s, "\n[output]");
        if let Some(dir) = &self.output.dir {
            let _ = writeln!(s, "dir = {dir}");
        }
        let _ = writeln!(s, "formats = {}", self.output.formats.join(","));
        s
    }

    pub fn from_ini(text: &str) -> anyhow::Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
            cfg.set(&section, key.trim(), value.trim())
                .with_context(|| format!("line {}: [{section}] {}", lineno + 1, key.trim()))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, section: &str, key: &str, v: &str) -> anyhow::Result<()> {
        match (section, key) {
            ("", "sigma") => self.sigma = v.into(),
            ("", "payoff") => self.payoff = v.into(),
            ("", "x") => self.x = v.parse()?,
            ("", "t") => self.t = v.parse()?,
            ("", "T") => self.t_end = v.parse()?,
            ("", "psi_xs") => self.psi_xs = parse_list(v)?,
            ("", "numeric") => self.numeric = parse_bool(v)?,
            ("mc", "paths") => self.mc.paths = v.parse()?,
            ("mc", "steps_per_unit") => self.mc.steps_per_unit = v.parse()?,
            ("mc", "seed") => self.mc.seed = Some(v.parse()?),
            ("mc", "ladder") => self.mc.ladder = parse_list(v)?,
            ("mc", "levels") => self.mc.levels = parse_list(v)?,
            ("mc", "scheme") => self.mc.scheme = v.into(),
            ("mc", "force_euler") => self.mc.force_euler = parse_bool(v)?,
            ("pde", "x_max") => self.pde.x_max = v.parse()?,
            ("pde", "x_intervals") => self.pde.x_intervals = v.parse()?,
            ("pde", "t_intervals") => self.pde.t_intervals = v.parse()?,
            ("pde", "theta") => self.pde.theta = v.parse()?,
            ("pde", "startup_steps") => self.pde.startup_steps = v.parse()?,
            ("pde", "bc") => self.pde.bc = v.into(),
            ("pde", "spacing") => self.pde.spacing = v.into(),
            ("pde", "ladder") => self.pde.ladder = parse_list(v)?,
            ("pde", "intervals_per_unit") => self.pde.intervals_per_unit = v.parse()?,
            ("pde", "bc_pair") => self.pde.bc_pair = parse_list(v)?,
            ("pde", "probes") => self.pde.probes = parse_list(v)?,
            ("output", "dir") => self.output.dir = Some(v.into()),
            ("output", "formats") => self.output.formats = parse_list(v)?,
            _ => bail!("unknown key"),
        }
        Ok(())
    }
}
