//! Acceptance aggregation: fold the verdict files of a run directory
//! into a single pass/fail summary, one line per required check.
//!
//! The determinism check cannot be judged from a single run; passing a
//! replay directory (`--replay`) byte-compares the two runs (everything
//! except `.meta.json`, which holds wall-clock timing) and synthesizes
//! that verdict.

use crate::artifact::Verdict;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// Required checks and what each one certifies.
pub const REQUIRED: &[(&str, &str)] = &[
    ("minimizer-round", "ground state at the round sphere: lambda = 8pi, multiplier 2, f = 0"),
    ("first-variation", "analytic d-lambda agrees with Richardson finite differences"),
    ("modal-stability", "fixed-class modal second variations match the closed form and FD"),
    ("stability-kernel", "stability-composite kernel has dimension 4 with tight residuals"),
    ("product-direction", "traceless class direction on the product gives 256pi^2 > 0"),
    ("riemannian-hessian", "tensor Hessian matches the potential pipeline; Lie directions null"),
    ("f-response", "linearized minimizer response solves its defining identity"),
    ("flow-basin", "normalized flow: monotone lambda, basin of attraction to round"),
    ("extremum-audit", "lambda <= 8pi with equality only at gauge-equivalents of round"),
    ("determinism", "byte-identical artifacts across reruns with the same seed"),
];

struct Found {
    scenario: String,
    passed: bool,
    failures: Vec<String>,
}

fn load_verdicts(dir: &Path) -> Result<Vec<Verdict>, String> {
    let mut verdicts = Vec::new();
    let mut entries: Vec<_> = fs::read_dir(dir)
        .map_err(|e| format!("cannot read {}: {e}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".verdict.json"))
        })
        .collect();
    entries.sort();
    for path in entries {
        let text =
            fs::read_to_string(&path).map_err(|e| format!("read {}: {e}", path.display()))?;
        let v: Verdict =
            serde_json::from_str(&text).map_err(|e| format!("parse {}: {e}", path.display()))?;
        verdicts.push(v);
    }
    Ok(verdicts)
}

/// Byte-compare two run directories, ignoring `.meta.json` files.
/// Returns the relative names that differ or are missing.
pub fn replay_diff(a: &Path, b: &Path) -> Result<Vec<String>, String> {
    let list = |dir: &Path| -> Result<Vec<String>, String> {
        let mut names: Vec<String> = fs::read_dir(dir)
            .map_err(|e| format!("cannot read {}: {e}", dir.display()))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_file())
            .filter_map(|e| e.file_name().to_str().map(str::to_string))
            .filter(|n| !n.ends_with(".meta.json"))
            .collect();
        names.sort();
        Ok(names)
    };
    let names_a = list(a)?;
    let names_b = list(b)?;
    let mut diffs = Vec::new();
    for n in names_a.iter().chain(names_b.iter()) {
        if diffs.contains(n) {
            continue;
        }
        let pa = a.join(n);
        let pb = b.join(n);
        if !(pa.is_file() && pb.is_file()) {
            diffs.push(n.clone());
            continue;
        }
        let ba = fs::read(&pa).map_err(|e| format!("read {}: {e}", pa.display()))?;
        let bb = fs::read(&pb).map_err(|e| format!("read {}: {e}", pb.display()))?;
        if ba != bb {
            diffs.push(n.clone());
        }
    }
    diffs.sort();
    diffs.dedup();
    Ok(diffs)
}

/// Print one line per required check; true iff everything passed.
pub fn accept(dir: &Path, replay: Option<&Path>) -> Result<bool, String> {
    let verdicts = load_verdicts(dir)?;
    let mut found: BTreeMap<String, Found> = BTreeMap::new();
    for v in &verdicts {
        for c in &v.checks {
            let failures: Vec<String> = c
                .details
                .iter()
                .filter(|d| d.ends_with("FAILED"))
                .cloned()
                .collect();
            let entry = found.entry(c.id.clone()).or_insert_with(|| Found {
                scenario: v.scenario.clone(),
                passed: true,
                failures: Vec::new(),
            });
            entry.passed &= c.passed;
            entry.failures.extend(failures);
            if entry.scenario != v.scenario {
                entry.scenario = format!("{},{}", entry.scenario, v.scenario);
            }
        }
    }

    if let Some(other) = replay {
        let diffs = replay_diff(dir, other)?;
        found.insert(
            "determinism".into(),
            Found {
                scenario: "replay".into(),
                passed: diffs.is_empty(),
                failures: diffs.iter().map(|d| format!("differs: {d}")).collect(),
            },
        );
    }

    let mut all_pass = true;
    for (id, description) in REQUIRED {
        match found.get(*id) {
            Some(f) if f.passed => {
                println!("PASS   {id:20} {description} [{}]", f.scenario);
            }
            Some(f) => {
                all_pass = false;
                println!("FAIL   {id:20} {description} [{}]", f.scenario);
                for line in f.failures.iter().take(5) {
                    println!("       - {line}");
                }
            }
            None => {
                all_pass = false;
                println!("ABSENT {id:20} {description}");
            }
        }
    }
    for (id, f) in &found {
        if REQUIRED.iter().any(|(r, _)| r == id) {
            continue;
        }
        let word = if f.passed { "PASS" } else { "FAIL" };
        all_pass &= f.passed;
        println!("{word}   {id:20} (additional check) [{}]", f.scenario);
        if !f.passed {
            for line in f.failures.iter().take(5) {
                println!("       - {line}");
            }
        }
    }
    Ok(all_pass)
}
