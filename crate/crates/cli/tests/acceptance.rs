//! End-to-end acceptance: run every shipped scenario twice with the same
//! seed, byte-compare the two runs for determinism, and aggregate the
//! verdicts into the one-line-per-check summary.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_entropy-lab")
}

fn scenario_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

const SCENARIOS: &[&str] = &[
    "lambda",
    "spectrum",
    "fixed_class",
    "general",
    "riemannian",
    "flow",
    "basin",
    "extremum",
];

#[test]
fn full_acceptance_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let replay = tmp.path().join("replay");
    for name in SCENARIOS {
        let cfg = scenario_dir().join(format!("{name}.toml"));
        for out in [&first, &replay] {
            let res = Command::new(bin())
                .args(["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .output()
                .unwrap();
            assert!(
                res.status.success(),
                "scenario {name} failed:\n{}{}",
                String::from_utf8_lossy(&res.stdout),
                String::from_utf8_lossy(&res.stderr),
            );
        }
    }
    let res = Command::new(bin())
        .args([
            "accept",
            first.to_str().unwrap(),
            "--replay",
            replay.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    // The summary is the deliverable: one pass/fail line per check.
    print!("{}", String::from_utf8_lossy(&res.stdout));
    assert!(
        res.status.success(),
        "acceptance summary reported failure:\n{}{}",
        String::from_utf8_lossy(&res.stdout),
        String::from_utf8_lossy(&res.stderr),
    );
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("typo.toml");
    std::fs::write(
        &cfg,
        "name = \"typo\"\nkind = \"lambda\"\n\n[grid]\nlmax_typo = 8\n",
    )
    .unwrap();
    let res = Command::new(bin())
        .args(["run", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("lmax_typo"), "stderr does not name the key: {err}");
}

#[test]
fn empty_directory_reports_everything_absent() {
    let tmp = tempfile::tempdir().unwrap();
    let res = Command::new(bin())
        .args(["accept", tmp.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
    let out = String::from_utf8_lossy(&res.stdout);
    assert!(out.lines().filter(|l| l.starts_with("ABSENT")).count() >= 10, "{out}");
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let res = Command::new(bin())
        .env("ENTROPY_LAB_THREADS", "zero")
        .args(["spectrum"])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn tolerance_override_can_force_a_failure() {
    // Tightening the round-value tolerance beyond machine precision must
    // flip the check to a failure (exit 1), proving overrides are live.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = scenario_dir().join("general.toml");
    let res = Command::new(bin())
        .args([
            "run",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
            "--tol-overrides",
            "rel_class=1e-15",
        ])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(1));
}
