//! End-to-end probes of the command-line surface: each verb runs against a
//! temp directory and the artifacts land where promised.

use std::path::Path;
use std::process::{Command, Output};

fn dpm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary spawns")
}

fn stdout_of(output: &Output) -> String {
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn suite_generation_feeds_runs_and_stats_recomputation() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    let out = stdout_of(&dpm(
        &["gen-suite", "--out", suite.to_str().unwrap()],
        dir.path(),
    ));
    assert!(out.contains("wrote 12 cases"), "{out}");
    assert!(suite.join("suite.json").exists());
    assert!(suite.join("cases/loan_L01/case.json").exists());

    let results = dir.path().join("exp1");
    let out = stdout_of(&dpm(
        &[
            "run",
            "--exp",
            "1",
            "--budget",
            "tight",
            "--condition",
            "both",
            "--resamples",
            "1000",
            "--suite",
            suite.to_str().unwrap(),
            "--out",
            results.to_str().unwrap(),
            "--verify",
        ],
        dir.path(),
    ));
    assert!(out.contains("20 runs"), "{out}");
    for file in ["manifest.json", "scores.json", "missing.json", "exp1_results.csv", "exp1_calls.csv"] {
        assert!(results.join(file).exists(), "{file} missing");
    }
    assert_eq!(
        std::fs::read_to_string(results.join("missing.json")).unwrap().trim(),
        "[]"
    );

    // The standalone stats pass rebuilds the table from scores.json using
    // the manifest's parameters, so it must match the emitted CSV exactly.
    let table = stdout_of(&dpm(
        &["stats", "--results", results.to_str().unwrap()],
        dir.path(),
    ));
    let emitted = std::fs::read_to_string(results.join("exp1_results.csv")).unwrap();
    assert_eq!(table, emitted);
    assert!(table.starts_with("budget,metric,mean_dpm,mean_summ,mean_delta,p,cohens_h,ci_low,ci_high"));
    assert!(table.contains("\ntight,frp,1.0000,"));
}

#[test]
fn replay_probe_reports_stable_hashes_for_both_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout_of(&dpm(
        &[
            "replay",
            "--case",
            "loan_001",
            "--condition",
            "both",
            "--replays",
            "3",
        ],
        dir.path(),
    ));
    let reports: serde_json::Value = serde_json::from_str(&out).unwrap();
    let reports = reports.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    for report in reports {
        assert_eq!(report["case_id"], "loan_001");
        assert_eq!(report["unique_hashes"], 1);
        assert_eq!(report["max_edit"], 0.0);
    }
}

#[test]
fn replay_and_sensitivity_studies_emit_their_tables() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    stdout_of(&dpm(
        &["gen-suite", "--out", suite.to_str().unwrap()],
        dir.path(),
    ));

    let exp2 = dir.path().join("exp2");
    let out = stdout_of(&dpm(
        &[
            "run",
            "--exp",
            "2",
            "--replays",
            "3",
            "--suite",
            suite.to_str().unwrap(),
            "--out",
            exp2.to_str().unwrap(),
            "--verify",
        ],
        dir.path(),
    ));
    assert!(out.contains("7 cells"), "{out}");
    let table = std::fs::read_to_string(exp2.join("exp2_replay.csv")).unwrap();
    assert!(table.starts_with("case,condition,n,unique_hashes,mean_edit,max_edit,mean_chars"));
    assert!(exp2.join("replay_reports.json").exists());

    let exp3 = dir.path().join("exp3");
    let out = stdout_of(&dpm(
        &[
            "run",
            "--exp",
            "3",
            "--budget",
            "tight",
            "--resamples",
            "500",
            "--suite",
            suite.to_str().unwrap(),
            "--out",
            exp3.to_str().unwrap(),
        ],
        dir.path(),
    ));
    assert!(out.contains("ratio rows"), "{out}");
    let table = std::fs::read_to_string(exp3.join("exp3_sensitivity.csv")).unwrap();
    assert!(table.starts_with("rho,budget,metric,mean_delta,ci_low,ci_high,p"));
    assert!(table.contains(",tight,frp,"));
}

#[test]
fn selection_rubric_emits_contract_shaped_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = stdout_of(&dpm(
        &[
            "tams", "--replay", "false", "--audit", "false", "--isolation", "false", "--ratio",
            "12.5",
        ],
        dir.path(),
    ));
    let decision: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(decision["choice"], "DPM");
    assert_eq!(decision["triggered_rule"], "compression_ratio");

    let out = stdout_of(&dpm(
        &[
            "tams", "--replay", "false", "--audit", "true", "--isolation", "false", "--ratio",
            "2",
        ],
        dir.path(),
    ));
    let decision: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(decision["choice"], "DPM");
    assert_eq!(decision["triggered_rule"], "enterprise_property");

    let out = stdout_of(&dpm(
        &[
            "tams", "--replay", "false", "--audit", "false", "--isolation", "false", "--ratio",
            "2",
        ],
        dir.path(),
    ));
    let decision: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(decision["choice"], "EITHER");
    assert_eq!(decision["triggered_rule"], "default");
}

#[test]
fn audit_export_rebuilds_a_digest_chained_archive() {
    let dir = tempfile::tempdir().unwrap();
    let archive = dir.path().join("trail.jsonl");
    let out = stdout_of(&dpm(
        &[
            "audit-export",
            "--run",
            "loan_001__DPM__moderate",
            "--out",
            archive.to_str().unwrap(),
        ],
        dir.path(),
    ));
    // Projection spends exactly two calls: one projection, one decision.
    assert!(out.contains("exported 2 records"), "{out}");
    let body = std::fs::read_to_string(&archive).unwrap();
    let last = body.lines().last().unwrap();
    let manifest: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(manifest["run_id"], "loan_001__DPM__moderate");
    assert_eq!(manifest["records"], 2);
    assert_eq!(manifest["rolling_digest"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_inputs_fail_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let bad_case = dpm(&["replay", "--case", "nope", "--replays", "3"], dir.path());
    assert!(!bad_case.status.success());
    let bad_run_id = dpm(&["audit-export", "--run", "not-a-run-id"], dir.path());
    assert!(!bad_run_id.status.success());
    let bad_budget = dpm(
        &["run", "--exp", "1", "--budget", "roomy", "--out", "x"],
        dir.path(),
    );
    assert!(!bad_budget.status.success());
}
