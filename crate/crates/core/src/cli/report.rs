//! JSON reports and plot-data CSV files.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::locfit::LocalLinearFit;

pub const SCHEMA_VERSION: u32 = 1;

/// Envelope shared by every command's JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Seconds since the Unix epoch. The only field that varies between
    /// runs with the same configuration.
    pub timestamp: u64,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(command: impl Into<String>, config: serde_json::Value, seed: Option<u64>, result: T) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Self {
            schema_version: SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            command: command.into(),
            timestamp,
            config,
            seed,
            result,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Writes the report as pretty JSON.
pub fn emit_report<T: Serialize>(report: &Report<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, report.to_json()?)?;
    Ok(())
}

pub fn read_report<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Report<T>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `report.json` → `report.{suffix}.csv`, next to the report.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "report".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}.{suffix}.csv"))
}

/// One row per grid point: `t` and the estimated coefficient functions.
pub fn write_curve_csv(fit: &LocalLinearFit, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_owned()];
    header.extend(fit.column_names().iter().cloned());
    w.write_record(&header)?;
    for (k, t) in fit.grid().points().iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend((0..fit.p()).map(|j| fit.beta()[(k, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Generic plot-data table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| (*h).to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips() {
        let r = Report::new("select", serde_json::json!({"n": 10}), Some(3), vec![1.5, 2.0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        emit_report(&r, &path).unwrap();
        let back: Report<Vec<f64>> = read_report(&path).unwrap();
        assert_eq!(back, r);
        let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["schema_version"], 1);
    }

    #[test]
    fn sibling_paths() {
        assert_eq!(sibling_path(Path::new("/a/out.json"), "curve"), Path::new("/a/out.curve.csv"));
    }
}
