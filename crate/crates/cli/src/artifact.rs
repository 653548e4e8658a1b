//! Byte-stable artifact writers.
//!
//! CSV is the canonical output; every CSV is mirrored as JSON for
//! machine consumption, and each scenario additionally writes a verdict
//! file with its machine-readable pass/fail checks. Floats are printed
//! in a fixed scientific format so that identical computations produce
//! identical bytes. Wall-clock timing lives in a separate `.meta.json`
//! that is excluded from byte-stability comparisons.

use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Fixed float rendering used in every artifact.
pub fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "ragged row in {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub passed: bool,
    pub details: Vec<String>,
}

impl Check {
    pub fn new(id: &str) -> Self {
        Self {
            id: id.to_string(),
            passed: true,
            details: Vec::new(),
        }
    }

    /// Record one judged quantity: value, tolerance, and outcome.
    pub fn judge(&mut self, what: &str, value: f64, tol: f64, ok: bool) {
        self.details
            .push(format!("{what}={} tol={} {}", fmt(value), fmt(tol), verdict_word(ok)));
        self.passed &= ok;
    }

    pub fn require(&mut self, what: &str, ok: bool) {
        self.details.push(format!("{what} {}", verdict_word(ok)));
        self.passed &= ok;
    }
}

fn verdict_word(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Verdict {
    pub scenario: String,
    pub kind: String,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Serialize)]
struct JsonMirror<'a> {
    header: &'a [String],
    rows: &'a [Vec<String>],
    /// Tolerances relevant to the table, echoed for tables whose column
    /// layout is fixed and cannot carry them in-row.
    tolerances: &'a [(String, String)],
}

pub fn write_table(
    dir: &Path,
    scenario: &str,
    table: &Table,
    tolerances: &[(&str, f64)],
) -> Result<Vec<PathBuf>, String> {
    fs::create_dir_all(dir).map_err(|e| format!("mkdir {}: {e}", dir.display()))?;
    let base = format!("{scenario}.{}", table.name);
    let csv_path = dir.join(format!("{base}.csv"));
    let mut csv = String::new();
    csv.push_str(&table.header.join(","));
    csv.push('\n');
    for row in &table.rows {
        csv.push_str(&row.join(","));
        csv.push('\n');
    }
    fs::write(&csv_path, csv).map_err(|e| format!("write {}: {e}", csv_path.display()))?;

    let tols: Vec<(String, String)> = tolerances
        .iter()
        .map(|(k, v)| (k.to_string(), fmt(*v)))
        .collect();
    let mirror = JsonMirror {
        header: &table.header,
        rows: &table.rows,
        tolerances: &tols,
    };
    let json_path = dir.join(format!("{base}.json"));
    let mut text = serde_json::to_string_pretty(&mirror).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| format!("write {}: {e}", json_path.display()))?;
    Ok(vec![csv_path, json_path])
}

pub fn write_verdict(dir: &Path, verdict: &Verdict) -> Result<PathBuf, String> {
    fs::create_dir_all(dir).map_err(|e| format!("mkdir {}: {e}", dir.display()))?;
    let path = dir.join(format!("{}.verdict.json", verdict.scenario));
    let mut text = serde_json::to_string_pretty(verdict).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| format!("write {}: {e}", path.display()))?;
    Ok(path)
}

#[derive(Serialize)]
pub struct Meta<'a> {
    pub scenario: &'a str,
    pub wall_seconds: f64,
    pub config_echo: &'a str,
}

pub fn write_meta(dir: &Path, meta: &Meta) -> Result<(), String> {
    let path = dir.join(format!("{}.meta.json", meta.scenario));
    let mut text = serde_json::to_string_pretty(meta).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| format!("write {}: {e}", path.display()))
}

/// Diagnostics file for solver failures (exit code 3).
pub fn write_error(dir: &Path, scenario: &str, message: &str) {
    let _ = fs::create_dir_all(dir);
    let path = dir.join(format!("{scenario}.error.json"));
    let body = serde_json::json!({ "scenario": scenario, "error": message });
    let _ = fs::write(&path, format!("{body:#}\n"));
}
