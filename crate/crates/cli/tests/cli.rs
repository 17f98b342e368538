//! End-to-end tests of the `crossfoot` binary: exit codes, output formats,
//! and the gen-checks/apply loop.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_crossfoot")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

#[test]
fn clean_audit_exits_zero() {
    let out = run(&["audit", fixture("clean_crossfoot.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("no findings"));
}

#[test]
fn seeded_error_exits_one_with_fail_on_error() {
    let path = fixture("seeded_r1_mismatch.json");
    let out = run(&["audit", path.to_str().unwrap(), "--fail-on", "error"]);
    assert_eq!(out.status.code(), Some(1));
    // Warnings alone do not trip the default threshold.
    let warn_only = fixture("seeded_r3_boundary.json");
    let out = run(&["audit", warn_only.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let out = run(&["audit", warn_only.to_str().unwrap(), "--fail-on", "warning"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_and_io_errors_exit_two() {
    let out = run(&["audit", "no-such-file.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["audit"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let odd = dir.path().join("book.xls");
    std::fs::write(&odd, b"x").unwrap();
    let out = run(&["audit", odd.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn json_output_is_byte_identical_across_runs() {
    for name in ["clean_crossfoot.json", "seeded_r1_mismatch.json", "seeded_r2_chain.json"] {
        let path = fixture(name);
        let a = run(&["audit", path.to_str().unwrap(), "--format", "json"]);
        let b = run(&["audit", path.to_str().unwrap(), "--format", "json"]);
        assert_eq!(a.stdout, b.stdout, "output for {name} varied between runs");
        let parsed: serde_json::Value = serde_json::from_slice(&a.stdout).expect("valid JSON report");
        for key in ["tool", "version", "config", "findings", "counts", "footer"] {
            assert!(parsed.get(key).is_some(), "report missing `{key}`");
        }
    }
}

#[test]
fn audit_respects_config_rule_switches() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, br#"{"enabled_rules":["R1","R5"]}"#).unwrap();
    let path = fixture("seeded_r2_chain.json");
    let out = run(&[
        "audit",
        path.to_str().unwrap(),
        "--config",
        config.to_str().unwrap(),
        "--format",
        "json",
    ]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rules: Vec<&str> = parsed["findings"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["rule"].as_str().unwrap())
        .collect();
    assert!(!rules.contains(&"R2"), "R2 disabled but present: {rules:?}");
    assert!(!rules.contains(&"R3"));
}

#[test]
fn multiple_files_print_in_argument_order() {
    let a = fixture("clean_crossfoot.json");
    let b = fixture("seeded_r6_fixed.json");
    let out = run(&["audit", a.to_str().unwrap(), b.to_str().unwrap()]);
    let text = stdout(&out);
    let pos_a = text.find("clean_crossfoot.json").expect("first file header");
    let pos_b = text.find("seeded_r6_fixed.json").expect("second file header");
    assert!(pos_a < pos_b);
}

#[test]
fn parse_and_eval_commands() {
    let path = fixture("clean_subtotal.json");
    let out = run(&["parse", path.to_str().unwrap(), "--cell", "Data!B67"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("Call SUBTOTAL"), "{text}");
    assert!(text.contains("Range B51:OFFSET(B67,-1,0)"));

    let out = run(&["parse", path.to_str().unwrap(), "--cell", "Data!B67", "--format", "json"]);
    assert!(serde_json::from_slice::<serde_json::Value>(&out.stdout).is_ok());

    // 1 + 2 + ... + 16
    let out = run(&["eval", path.to_str().unwrap(), "--cell", "Data!B67"]);
    assert_eq!(stdout(&out).trim(), "136");

    let out = run(&["eval", path.to_str().unwrap(), "--cell", "Data!ZZ99"]);
    assert_eq!(stdout(&out).trim(), "(blank)");

    let out = run(&["eval", path.to_str().unwrap(), "--cell", "Nope!A1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recalc_diff_reports_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let stale = dir.path().join("stale.json");
    std::fs::write(
        &stale,
        br#"{"sheets":[{"name":"S","cells":[{"ref":"B2","v":4},{"ref":"B3","f":"=B2+6","v":11}]}]}"#,
    )
    .unwrap();
    let out = run(&["recalc-diff", stale.to_str().unwrap(), "--format", "json"]);
    let parsed: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(parsed["mismatches"].as_array().unwrap().len(), 1);
    assert_eq!(parsed["mismatches"][0]["delta"], serde_json::json!(1.0));

    let clean = fixture("clean_crossfoot.json");
    let out = run(&["recalc-diff", clean.to_str().unwrap()]);
    assert!(stdout(&out).contains("stored values match recalculation"));
}

#[test]
fn gen_checks_apply_then_reaudit_is_quiet() {
    let dir = tempfile::tempdir().unwrap();
    let patched = dir.path().join("patched.json");
    let source = fixture("clean_crossfoot_nocheck.json");

    let out = run(&["gen-checks", source.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let patches: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(patches.as_array().unwrap().len(), 1);
    assert_eq!(patches[0]["rule"], "R1");
    assert_eq!(patches[0]["target"], "Data!E6");

    let out = run(&[
        "gen-checks",
        source.to_str().unwrap(),
        "--apply",
        "--out",
        patched.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["audit", patched.to_str().unwrap(), "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let findings = report["findings"].as_array().unwrap();
    assert!(
        findings.iter().all(|f| !f["message"].as_str().unwrap().contains("missing check cell")),
        "missing-check finding survived the patch: {findings:?}"
    );
    assert_eq!(report["counts"]["error"], 0);
}

#[test]
fn manifest_check_command() {
    let dir = tempfile::tempdir().unwrap();
    let book = dir.path().join("book.json");
    std::fs::copy(fixture("clean_crossfoot.json"), &book).unwrap();

    // Sidecar naming convention: <workbook>.manifest.json.
    let sidecar = dir.path().join("book.json.manifest.json");
    std::fs::write(
        &sidecar,
        serde_json::json!({
            "q1": {"purpose": "demo", "criticality": "low"},
            "q2": {"location": "here", "version_id": "1"},
            "q3": {"usage_doc": "n/a"},
            "q4": {"audience": "me"},
            "q5": {"periodicity": "once"},
            "q6": {"reviewer": "me", "test_evidence": "tests"},
            "q7": {"signoff": "me", "reconciliation": "none"},
            "q8": {"internal_checks": ["Data!G7"]},
            "q9": {"design_conformity": []},
            "q10": {"pain_points": []}
        })
        .to_string(),
    )
    .unwrap();
    let out = run(&["manifest-check", book.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("answers all ten questions"));

    // Missing purpose is an error and trips the default threshold.
    std::fs::write(&sidecar, br#"{"q2": {"location": "x", "version_id": "1"}}"#).unwrap();
    let out = run(&["manifest-check", book.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("q1"));

    // No manifest file at all is an I/O error.
    std::fs::remove_file(&sidecar).unwrap();
    let out = run(&["manifest-check", book.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}
