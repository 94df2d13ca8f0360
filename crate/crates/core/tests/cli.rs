//! Command-line behaviour: exit codes, output files and the matrix driver.

use std::path::Path;
use std::process::{Command, Output};

use darcs::RunConfig;

fn darcs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darcs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "good.json", r#"{"num_vehicles": 10}"#);
    assert_eq!(
        darcs(&["validate", "--config", &good]).status.code(),
        Some(0)
    );

    let bad = write(dir.path(), "bad.json", r#"{"z_threshold": -1}"#);
    let out = darcs(&["validate", "--config", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("z_threshold must be > 0"));

    let unknown = write(dir.path(), "unknown.json", r#"{"z_treshold": 3}"#);
    assert_eq!(
        darcs(&["validate", "--config", &unknown]).status.code(),
        Some(2)
    );

    let missing = dir.path().join("nope.json");
    let out = darcs(&["validate", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn runtime_failure_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    // Eight samples cannot give 25 vehicles a non-empty shard each.
    let cfg = write(
        dir.path(),
        "tiny.json",
        r#"{"dataset": {"source": "synthetic", "num_samples": 8, "input_dim": 4, "num_classes": 4}}"#,
    );
    assert_eq!(darcs(&["run", "--config", &cfg]).status.code(), Some(4));
}

#[test]
fn missing_idx_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "idx.json",
        r#"{"dataset": {"source": "idx", "images": "/nonexistent/a", "labels": "/nonexistent/b"}}"#,
    );
    assert_eq!(darcs(&["run", "--config", &cfg]).status.code(), Some(3));
}

#[test]
fn run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"attack": "combined"}"#);
    let out_dir = dir.path().join("out");
    let out = darcs(&[
        "run",
        "--config",
        &cfg,
        "--seed",
        "7",
        "--out",
        out_dir.to_str().unwrap(),
        "max_rounds=3",
        "model.learning_rate=0.02",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let rounds = std::fs::read_to_string(out_dir.join("rounds.jsonl")).unwrap();
    assert_eq!(rounds.lines().count(), 3);
    for (i, line) in rounds.lines().enumerate() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["round"], i as u64 + 1);
    }
    let csv = std::fs::read_to_string(out_dir.join("accuracy.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("round,accuracy"));
    assert_eq!(csv.lines().count(), 4);

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("summary.json")).unwrap())
            .unwrap();
    // Three rounds can never satisfy a three-change plateau.
    assert_eq!(summary["convergence_round"], "inf");
    let echoed = RunConfig::from_value(summary["config"].clone(), &[]).unwrap();
    let expected = darcs::config::parse_config(
        Some(Path::new(&cfg)),
        &["max_rounds=3".into(), "model.learning_rate=0.02".into()],
        Some(7),
    )
    .unwrap();
    assert_eq!(echoed, expected);
    assert_eq!(echoed.seed, 7);
}

#[test]
fn run_without_out_prints_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", "{}");
    let out = darcs(&["run", "--config", &cfg, "max_rounds=2"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["rounds_run"], 2);
}

#[test]
fn matrix_row_count_is_axis_product() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"max_rounds": 4}"#);
    let axes = write(
        dir.path(),
        "axes.json",
        r#"{"attack": ["none", "combined"], "defense": ["none", "darcs", "zscore_only"], "seed": [1, 2]}"#,
    );
    let out_dir = dir.path().join("m");
    let out = darcs(&[
        "matrix",
        "--config",
        &cfg,
        "--axes",
        &axes,
        "--out",
        out_dir.to_str().unwrap(),
        "--jobs",
        "3",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = std::fs::read_to_string(out_dir.join("matrix_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 3 * 2);
    let table = std::fs::read_to_string(out_dir.join("matrix_table.csv")).unwrap();
    assert!(table.lines().next().unwrap().contains("darcs"));
    assert_eq!(std::fs::read_dir(out_dir.join("runs")).unwrap().count(), 12);

    let bad = write(dir.path(), "bad_axes.json", r#"{"defense": []}"#);
    let out = darcs(&[
        "matrix",
        "--config",
        &cfg,
        "--axes",
        &bad,
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn matrix_is_independent_of_job_count() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"max_rounds": 5, "attack": "gaussian"}"#,
    );
    let axes = write(
        dir.path(),
        "axes.json",
        r#"{"defense": ["none", "darcs"], "seed": [1, 2]}"#,
    );
    let read = |jobs: &str| {
        let out_dir = dir.path().join(format!("j{jobs}"));
        let out = darcs(&[
            "matrix",
            "--config",
            &cfg,
            "--axes",
            &axes,
            "--out",
            out_dir.to_str().unwrap(),
            "--jobs",
            jobs,
        ]);
        assert!(out.status.success());
        std::fs::read(out_dir.join("matrix_summary.csv")).unwrap()
    };
    assert_eq!(read("1"), read("4"));
}
