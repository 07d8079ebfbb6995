//! Black-box tests of the `qsum` binary: flags, config files, key files,
//! exit codes, and output formats.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn qsum(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qsum"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn records_of(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|line| serde_json::from_str(line).unwrap())
        .collect()
}

#[test]
fn run_with_explicit_keys_prints_the_modular_sum() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keys.txt"), "3 1\n5 0\n9 9\n").unwrap();
    let out = qsum(
        &[
            "run",
            "--d",
            "10",
            "--n",
            "3",
            "--len",
            "2",
            "--seed",
            "4",
            "--keys",
            "keys.txt",
            "--out",
            "run.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let records = records_of(&dir.path().join("run.jsonl"));
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["record"], "trial");
    assert_eq!(records[0]["k"], serde_json::json!([7, 0])); // (3+5+9, 1+0+9) mod 10
    assert_eq!(records[1]["record"], "summary");
    assert_eq!(records[1]["completed"], 1);
}

#[test]
fn run_requires_the_core_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &["run", "--n", "3", "--len", "2", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("--d"), "{}", stderr_of(&out));
}

#[test]
fn run_rejects_out_of_range_key_digits() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("keys.txt"), "1 1\n2 2\n3 3\n").unwrap();
    let out = qsum(
        &[
            "run", "--d", "3", "--n", "3", "--len", "2", "--seed", "1", "--keys", "keys.txt",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("out of range"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn run_rejects_invalid_dimensions_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &["run", "--d", "1", "--n", "3", "--len", "2", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("d must be >= 2"),
        "{}",
        stderr_of(&out)
    );

    let out = qsum(
        &["run", "--d", "3", "--n", "2", "--len", "2", "--seed", "1"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("n must be >= 3"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn attacked_run_aborts_with_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    // 64 decoys at τ = 0: detection is essentially certain
    let out = qsum(
        &[
            "run",
            "--d",
            "2",
            "--n",
            "3",
            "--len",
            "2",
            "--decoys",
            "64",
            "--seed",
            "5",
            "--strategy",
            "intercept-resend",
            "--out",
            "run.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2), "{}", stderr_of(&out));
    let records = records_of(&dir.path().join("run.jsonl"));
    assert_eq!(records[0]["status"], "aborted");
    assert!(records[0].get("k").is_none());
}

#[test]
fn run_refuses_participant_strategies() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &[
            "run",
            "--d",
            "3",
            "--n",
            "3",
            "--len",
            "1",
            "--seed",
            "1",
            "--strategy",
            "semi-honest-p1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("attack command"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn scenario_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("scenario.toml"),
        r#"
command = "run"
d = 5
n = 3
len = 2
seed = 9
keys = [[1, 2], [3, 4], [0, 1]]
out = "from-config.jsonl"
"#,
    )
    .unwrap();
    let out = qsum(&["run", "--config", "scenario.toml"], dir.path());
    assert!(out.status.success(), "{}", stderr_of(&out));
    let records = records_of(&dir.path().join("from-config.jsonl"));
    assert_eq!(records[0]["k"], serde_json::json!([4, 2])); // (1+3+0, 2+4+1) mod 5

    // a flag overrides the file value
    let out = qsum(
        &[
            "run",
            "--config",
            "scenario.toml",
            "--out",
            "override.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert!(dir.path().join("override.jsonl").exists());
}

#[test]
fn scenario_file_command_must_match() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("scenario.toml"), "command = \"attack\"\n").unwrap();
    let out = qsum(
        &["run", "--config", "scenario.toml", "--d", "2"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("names command"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn private_mode_publishes_no_sum() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &[
            "private-mode",
            "--d",
            "7",
            "--n",
            "4",
            "--len",
            "2",
            "--seed",
            "3",
            "--out",
            "pm.jsonl",
            "--transcript",
            "pm.log",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let records = records_of(&dir.path().join("pm.jsonl"));
    // one trial per preparer plus the summary
    assert_eq!(records.len(), 5);
    let sums: Vec<&serde_json::Value> = records[..4].iter().map(|r| &r["k"]).collect();
    assert!(sums.windows(2).all(|w| w[0] == w[1]));
    let transcript = fs::read_to_string(dir.path().join("pm.log")).unwrap();
    assert!(!transcript.is_empty());
    assert!(
        !transcript.contains("final-sum"),
        "private mode must not broadcast the sum"
    );
    // the announced per-party results are still there
    assert!(transcript.contains("result from="));
}

#[test]
fn attack_campaign_reports_posterior_deviation_for_collusion() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &[
            "attack",
            "--strategy",
            "collude:2,3",
            "--d",
            "4",
            "--n",
            "4",
            "--len",
            "1",
            "--seed",
            "2",
            "--trials",
            "5",
            "--out",
            "collude.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let records = records_of(&dir.path().join("collude.jsonl"));
    assert_eq!(records.len(), 6);
    let summary = records.last().unwrap();
    assert_eq!(summary["strategy"], "collude:2,3");
    assert_eq!(summary["aborted"], 0);
    // two colluders of four parties learn nothing
    let dev = summary["max_posterior_deviation"].as_f64().unwrap();
    assert!(dev <= 1e-9, "deviation {dev}");
}

#[test]
fn attack_validates_the_collusion_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &[
            "attack",
            "--strategy",
            "collude:2,3,4",
            "--d",
            "2",
            "--n",
            "3",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("beyond n"), "{}", stderr_of(&out));

    let out = qsum(
        &[
            "attack",
            "--strategy",
            "collude:1,2",
            "--d",
            "2",
            "--n",
            "3",
            "--seed",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1), "{}", stderr_of(&out));
}

#[test]
fn attack_requires_a_strategy() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(&["attack", "--d", "2", "--seed", "1"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("--strategy"),
        "{}",
        stderr_of(&out)
    );
}

#[test]
fn oracle_check_exits_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &[
            "oracle-check",
            "--dmax",
            "3",
            "--nmax",
            "3",
            "--out",
            "oc.jsonl",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let records = records_of(&dir.path().join("oc.jsonl"));
    let summary = records.last().unwrap();
    assert_eq!(summary["ok"], true);
    assert!(summary["max_abs_diff"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn transcripts_carry_one_event_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = qsum(
        &[
            "run",
            "--d",
            "3",
            "--n",
            "3",
            "--len",
            "2",
            "--decoys",
            "2",
            "--seed",
            "8",
            "--transcript",
            "run.log",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr_of(&out));
    let transcript = fs::read_to_string(dir.path().join("run.log")).unwrap();
    let kinds: Vec<&str> = transcript
        .lines()
        .map(|l| l.split_whitespace().next().unwrap())
        .collect();
    // two transfers, then per-channel disclose/results/initials interleaved
    // with decoy measurements, then data measurements, announcements, sum
    assert_eq!(kinds.iter().filter(|&&k| k == "transfer").count(), 2);
    assert_eq!(kinds.iter().filter(|&&k| k == "disclose").count(), 2);
    assert_eq!(kinds.iter().filter(|&&k| k == "decoy-results").count(), 2);
    assert_eq!(kinds.iter().filter(|&&k| k == "decoy-initials").count(), 2);
    // 4 decoy measurements + 6 data measurements
    assert_eq!(kinds.iter().filter(|&&k| k == "measure").count(), 10);
    assert_eq!(kinds.iter().filter(|&&k| k == "result").count(), 2);
    assert_eq!(kinds.iter().filter(|&&k| k == "final-sum").count(), 1);
    assert!(kinds.iter().all(|&k| k != "abort"));
}
