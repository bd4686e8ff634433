//! CSV and JSON files, and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use divest_core::trajectory::{Sample, Trajectory};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleStats;
use crate::error::{HarnessError, Result};

pub const MANIFEST: &str = "manifest.json";

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    HarnessError::data(path, e)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_error(path, e))
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    csv::Reader::from_path(path).map_err(|e| csv_error(path, e))
}

/// Writes a table of numbers. `f64` values use the shortest representation
/// that parses back to the same bits.
pub fn write_table(
    path: &Path,
    header: &[String],
    rows: impl IntoIterator<Item = Vec<f64>>,
) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Reads a numeric table; returns the header and the rows.
pub fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = reader(path)?;
    let header = r
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| HarnessError::data(path, e))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let header: Vec<String> = Sample::COLUMNS.iter().map(|c| c.to_string()).collect();
    write_table(
        path,
        &header,
        traj.samples.iter().map(|s| s.values().to_vec()),
    )
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let (header, rows) = read_table(path)?;
    if header != Sample::COLUMNS {
        return Err(HarnessError::data(path, "unexpected trajectory columns"));
    }
    let samples = rows
        .iter()
        .map(|r| {
            let v: [f64; 18] = r
                .as_slice()
                .try_into()
                .map_err(|_| HarnessError::data(path, "short row"))?;
            Ok(Sample::from_values(&v))
        })
        .collect::<Result<_>>()?;
    Ok(Trajectory { samples })
}

/// Writes `t` followed by `<column>_mean`, `<column>_sd`, `<column>_se`.
pub fn write_stats(path: &Path, stats: &EnsembleStats) -> Result<()> {
    let mut header = vec!["t".to_string()];
    for c in &stats.columns {
        header.extend([format!("{c}_mean"), format!("{c}_sd"), format!("{c}_se")]);
    }
    let rows = (0..stats.times.len()).map(|t| {
        let mut row = vec![stats.times[t]];
        for c in 0..stats.columns.len() {
            row.extend([stats.mean[c][t], stats.sd[c][t], stats.se[c][t]]);
        }
        row
    });
    write_table(path, &header, rows)
}

pub fn run_file(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("run_{index:04}.csv"))
}

/// Writes every run into `dir` as `run_NNNN.csv`.
pub fn write_runs(dir: &Path, runs: &[Trajectory]) -> Result<()> {
    ensure_dir(dir)?;
    for (i, r) in runs.iter().enumerate() {
        write_trajectory(&run_file(dir, i), r)?;
    }
    Ok(())
}

/// Reads `run_0000.csv, run_0001.csv, ...` until the first missing index.
pub fn read_runs(dir: &Path) -> Result<Vec<Trajectory>> {
    let mut runs = Vec::new();
    loop {
        let path = run_file(dir, runs.len());
        if !path.exists() {
            break;
        }
        runs.push(read_trajectory(&path)?);
    }
    if runs.is_empty() {
        return Err(HarnessError::data(dir, "no run files"));
    }
    Ok(runs)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::data(path, e))?;
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::data(path, e))
}

/// Everything needed to regenerate an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// Commit the binary was built from; empty outside a git checkout.
    pub git: String,
    pub command: String,
    /// Subcommand options beyond the configuration.
    pub options: serde_json::Value,
    /// Resolved configuration as TOML.
    pub config: String,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, options: serde_json::Value, config: String) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            git: env!("DIVEST_GIT_HASH").to_string(),
            command: command.to_string(),
            options,
            config,
            outputs: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_csv_round_trips_bitwise() {
        let samples = (0..5)
            .map(|k| {
                let mut v = [0.0; 18];
                for (j, x) in v.iter_mut().enumerate() {
                    *x = (k * 18 + j) as f64 / 7.0 + 1e-300 * j as f64;
                }
                Sample::from_values(&v)
            })
            .collect();
        let traj = Trajectory { samples };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory(&path, &traj).unwrap();
        assert_eq!(read_trajectory(&path).unwrap(), traj);
    }

    #[test]
    fn foreign_columns_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_table(&path, &["a".into(), "b".into()], [vec![1.0, 2.0]]).unwrap();
        assert!(read_trajectory(&path).is_err());
    }
}
