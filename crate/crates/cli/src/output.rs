use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use leafwise::scenario::Numerics;
use leafwise::verify::CheckRecord;
use serde::Serialize;

pub const ARTIFACT: &str = "leafwise";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// 17 significant digits.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub artifact: &'static str,
    pub version: &'static str,
    pub scenario: String,
    pub command: String,
    pub numerics: Numerics,
    pub summary: Vec<String>,
    pub warnings: Vec<String>,
    pub outputs: Vec<String>,
    pub checks: Vec<CheckRecord>,
    pub pass: bool,
}

impl Report {
    pub fn new(scenario: &str, command: &str, numerics: Numerics) -> Self {
        Self {
            artifact: ARTIFACT,
            version: VERSION,
            scenario: scenario.to_string(),
            command: command.to_string(),
            numerics,
            summary: Vec::new(),
            warnings: Vec::new(),
            outputs: Vec::new(),
            checks: Vec::new(),
            pass: true,
        }
    }

    pub fn finish(&mut self) {
        self.pass = leafwise::verify::all_pass(&self.checks);
    }
}

/// Writes the products of one run into a directory.
pub struct Sink {
    dir: PathBuf,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    pub fn csv(&self, report: &mut Report, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row)?;
        }
        w.flush()?;
        report.outputs.push(name.to_string());
        Ok(())
    }

    pub fn report(&self, report: &mut Report) -> Result<PathBuf> {
        let name = format!("{}_report.json", report.command);
        report.outputs.push(name.clone());
        let path = self.dir.join(&name);
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

pub fn columns(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

pub fn reals(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|&x| real(x))
}
