//! CSV and manifest writers.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::Serialize;
use serde_json::Value;

use super::config::Config;
use crate::diagnostics::DiagnosticsRow;
use crate::error::Result;
use crate::timeline::Snapshot;

/// Round-trip exact representation with 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Line-oriented CSV writer.
pub struct CsvWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl CsvWriter {
    pub fn create(path: &Path, header: &str) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{header}")?;
        Ok(Self {
            path: path.to_path_buf(),
            out,
        })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        let mut first = true;
        for f in fields {
            if !first {
                self.out.write_all(b",")?;
            }
            self.out.write_all(f.as_ref().as_bytes())?;
            first = false;
        }
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn numbers(&mut self, values: &[f64]) -> Result<()> {
        let fields: Vec<String> = values.iter().map(|x| num(*x)).collect();
        self.row(&fields)
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush()?;
        Ok(self.path)
    }
}

pub fn write_timeseries(path: &Path, rows: &[DiagnosticsRow]) -> Result<PathBuf> {
    let mut w = CsvWriter::create(path, DiagnosticsRow::CSV_HEADER)?;
    for r in rows {
        w.numbers(&r.values())?;
    }
    w.finish()
}

/// Long-format `t,v,f` export of stored snapshots.
pub fn write_snapshots(path: &Path, snapshots: &[Snapshot]) -> Result<PathBuf> {
    let mut w = CsvWriter::create(path, "t,v,f")?;
    for s in snapshots {
        let p = s.f.params();
        for (j, f) in s.f.values().iter().enumerate() {
            w.numbers(&[s.t, p.center(j), *f])?;
        }
    }
    w.finish()
}

/// `git describe` of the working directory, or `unknown`.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".to_string())
}

/// Everything needed to re-run an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub experiment: String,
    pub config: Config,
    /// Seed actually used, defaults included.
    pub seed: u64,
    pub git_describe: String,
    pub wall_time_s: f64,
    pub threads: usize,
    pub outputs: Vec<String>,
    pub summary: Value,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<PathBuf> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self).map_err(std::io::Error::from)?;
        writeln!(out)?;
        out.flush()?;
        Ok(path.to_path_buf())
    }
}
