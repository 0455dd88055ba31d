use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// A plottable table: one CSV file with a header row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(skip)]
    pub rows: Vec<Vec<f64>>,
}

impl Curve {
    pub fn new(name: impl Into<String>, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }

    /// CSV text; values use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    /// Per-trial values and the aggregates computed from them.
    pub results: Value,
    pub notes: Vec<String>,
    pub curves: Vec<Curve>,
}

impl ExperimentReport {
    pub fn new(config: &ExperimentConfig, results: Value, curves: Vec<Curve>, notes: Vec<String>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: config.experiment.id().to_string(),
            provenance: Provenance {
                config_hash: config.hash(),
                seed: config.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
            },
            config: config.canonical(),
            results,
            notes,
            curves,
        }
    }

    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    /// Writes `report.json` and one CSV per curve into `dir`; returns the written paths.
    pub fn write(&self, dir: &Path) -> CliResult<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut written = Vec::new();
        let path = dir.join("report.json");
        fs::write(&path, self.to_json()).map_err(|e| CliError::io(&path, e))?;
        written.push(path);
        for curve in &self.curves {
            let path = dir.join(curve.file_name());
            fs::write(&path, curve.to_csv()).map_err(|e| CliError::io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}
