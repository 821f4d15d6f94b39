//! Verdicts, tables and their CSV / JSON-lines emission.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::Scenario;
use crate::error::{Error, Result};

/// One acceptance rule applied to one measured number.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub rule: String,
    pub description: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Verdict {
    /// Passes when `measured <= tolerance`.
    pub fn at_most(rule: &str, description: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(rule, description, measured, tolerance, measured <= tolerance)
    }

    /// Passes when `measured >= tolerance`.
    pub fn at_least(rule: &str, description: impl Into<String>, measured: f64, tolerance: f64) -> Self {
        Self::new(rule, description, measured, tolerance, measured >= tolerance)
    }

    pub fn new(rule: &str, description: impl Into<String>, measured: f64, tolerance: f64, pass: bool) -> Self {
        Self { rule: rule.into(), description: description.into(), measured, tolerance, pass: pass && !measured.is_nan() }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: measured {:.6e}, tolerance {:.6e}",
            if self.pass { "PASS" } else { "FAIL" },
            self.rule,
            self.description,
            self.measured,
            self.tolerance
        )
    }
}

/// Numeric table with fixed headers.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.headers.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            // Shortest round-trip formatting keeps the bytes stable.
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Everything one scenario run produced.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub scenario: Scenario,
    pub seed: u64,
    pub config: Value,
    pub table: Table,
    pub verdicts: Vec<Verdict>,
    /// Scenario-specific scalars.
    pub summary: Value,
    pub elapsed_seconds: f64,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn verdict(&self, rule: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.rule == rule)
    }

    pub fn summary_f64(&self, key: &str) -> Option<f64> {
        self.summary.get(key).and_then(Value::as_f64)
    }

    pub fn csv_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.csv", self.scenario))
    }

    pub fn jsonl_path(&self, dir: &Path) -> PathBuf {
        dir.join(format!("{}.jsonl", self.scenario))
    }

    /// Lines: a header with config, seed, version and wall-clock, the summary,
    /// one line per table row, one line per verdict.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<jsonl>", e);
        let header = json!({
            "type": "run",
            "scenario": self.scenario,
            "seed": self.seed,
            "version": env!("CARGO_PKG_VERSION"),
            "elapsed_seconds": self.elapsed_seconds,
            "config": self.config,
        });
        writeln!(out, "{}", serde_json::to_string(&header)?).map_err(io)?;
        writeln!(out, "{}", serde_json::to_string(&json!({"type": "summary", "values": self.summary}))?)
            .map_err(io)?;
        for row in &self.table.rows {
            let obj: serde_json::Map<String, Value> =
                self.table.headers.iter().cloned().zip(row.iter().map(|v| json!(v))).collect();
            writeln!(out, "{}", serde_json::to_string(&json!({"type": "row", "values": obj}))?).map_err(io)?;
        }
        for v in &self.verdicts {
            let mut line = serde_json::to_value(v)?;
            line["type"] = json!("verdict");
            writeln!(out, "{}", serde_json::to_string(&line)?).map_err(io)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

/// Writes the report's table (CSV) or full record (JSON lines) to `path`.
pub fn emit(report: &Report, format: Format, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    match format {
        Format::Csv => report.table.write_csv(&mut w),
        Format::Jsonl => report.write_jsonl(&mut w),
    }
    .map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `<scenario>.csv` and `<scenario>.jsonl` into `dir`.
pub fn emit_all(report: &Report, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    emit(report, Format::Csv, report.csv_path(dir))?;
    emit(report, Format::Jsonl, report.jsonl_path(dir))
}

/// Verdict lines found in the `*.jsonl` files of `dir`, keyed by scenario file stem.
pub fn collect_verdicts(dir: impl AsRef<Path>) -> Result<Vec<(String, Verdict)>> {
    let dir = dir.as_ref();
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for path in files {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            let v: Value = serde_json::from_str(&line)?;
            if v.get("type").and_then(Value::as_str) == Some("verdict") {
                out.push((stem.clone(), serde_json::from_value(v)?));
            }
        }
    }
    Ok(out)
}

/// Markdown summary of collected verdicts.
pub fn render_summary(verdicts: &[(String, Verdict)]) -> String {
    let mut s = String::from("| scenario | rule | result | measured | tolerance | description |\n|---|---|---|---|---|---|\n");
    for (sc, v) in verdicts {
        s.push_str(&format!(
            "| {sc} | {} | {} | {:.6e} | {:.6e} | {} |\n",
            v.rule,
            if v.pass { "PASS" } else { "FAIL" },
            v.measured,
            v.tolerance,
            v.description
        ));
    }
    let failed = verdicts.iter().filter(|(_, v)| !v.pass).count();
    s.push_str(&format!("\n{} verdicts, {failed} failed\n", verdicts.len()));
    s
}
