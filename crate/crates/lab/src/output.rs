//! CSV tables and the JSON report envelope.

use std::fs;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use crate::config::ScenarioConfig;

pub const TOOL: &str = "cauchy-lab";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// A named numeric table written as `<name>.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// UTF-8, LF line endings, shortest round-trip float formatting.
    pub fn to_csv(&self) -> anyhow::Result<String> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        Ok(String::from_utf8(w.into_inner()?)?)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Envelope<'a, R: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a ScenarioConfig,
    /// The same configuration as an INI file; `--config` on it reproduces the run.
    pub config_ini: String,
    pub seed: Option<u64>,
    pub result: &'a R,
    pub warnings: &'a [String],
}

impl<'a, R: Serialize> Envelope<'a, R> {
    pub fn new(command: &'a str, config: &'a ScenarioConfig, result: &'a R, warnings: &'a [String]) -> Self {
        Envelope {
            tool: TOOL,
            version: VERSION,
            command,
            config,
            config_ini: config.to_ini(),
            seed: config.mc.seed,
            result,
            warnings,
        }
    }
}

/// Writes `report.json` and the tables into `dir`, honouring `formats`.
pub fn write_artifacts(dir: &Path, formats: &[String], json: &str, tables: &[Table]) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    if formats.iter().any(|f| f == "json") {
        let path = dir.join("report.json");
        fs::write(&path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    if formats.iter().any(|f| f == "csv") {
        for table in tables {
            let path = dir.join(format!("{}.csv", table.name));
            fs::write(&path, table.to_csv()?).with_context(|| format!("writing {}", path.display()))?;
        }
    }
    Ok(())
}
