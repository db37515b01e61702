use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_efsgd"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

const QUADRATIC: &str = r#"{
    "workers": 2, "iterations": 50, "seed": 4, "momentum": 0.9,
    "compressor": {"kind": "blockwise_scaled_sign", "blocks": {"uniform": 4}},
    "schedule": {"kind": "constant", "gamma": 0.02},
    "problem": {"kind": "quadratic", "dim": 12, "condition": 5.0, "noise": 1.0}
}"#;

fn run(args: &[&str], out_root: &Path) -> Output {
    bin()
        .args(args)
        .env("EFSGD_OUT", out_root)
        .output()
        .unwrap()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.json", QUADRATIC);
    let out = run(&["run", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run_dir = dir.path().join("quad");
    let csv = fs::read_to_string(run_dir.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "t,loss,grad_norm_sq,error_norm_sq,stepsize,bits_ideal,bits_wire"
    );
    assert_eq!(lines.len(), 51);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["verification"]["passed"], true);
    assert_eq!(summary["final"]["iterations"], 50);
    assert_eq!(summary["config"]["momentum"], 0.9);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.json", QUADRATIC);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for o in [&a, &b] {
        let out = run(
            &[
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                o.to_str().unwrap(),
            ],
            dir.path(),
        );
        assert!(out.status.success());
    }
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(b.join("metrics.csv")).unwrap()
    );
}

#[test]
fn invalid_momentum_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.json", QUADRATIC);
    let out = run(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "momentum=1.0",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("momentum"));

    let out = run(&["run", "--config", "/nonexistent.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let bad = write_config(dir.path(), "bad.json", r#"{"workers": 1, "unknown": 3}"#);
    let out = run(&["run", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn override_switches_optimizer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.json", QUADRATIC);
    let out = run(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "optimizer=signsgd",
            "--set",
            "schedule.gamma=0.001",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("quad/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["config"]["optimizer"], "signsgd");
    assert_eq!(summary["config"]["schedule"]["gamma"], 0.001);
    // majority vote: 2Md bits per iteration
    assert_eq!(summary["final"]["total_bits_ideal"], 50 * 2 * 2 * 12);
}

#[test]
fn divergence_exits_with_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.json", QUADRATIC);
    let out = run(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "optimizer=full_precision",
            "--set",
            "schedule.gamma=5.0",
            "--set",
            "iterations=500",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("diverged"));
}

#[test]
fn sweep_runs_grid_with_paired_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{"base": {QUADRATIC}, "grid": {{"workers": [1, 2, 4]}}, "repetitions": 3, "base_seed": 10}}"#
    );
    let cfg = write_config(dir.path(), "grid.json", &body);
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let root = dir.path().join("grid");
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("index.json")).unwrap()).unwrap();
    let runs = index["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 9);
    assert_eq!(index["failed"], 0);
    for r in runs {
        let d = root.join(r["dir"].as_str().unwrap());
        assert!(d.join("metrics.csv").is_file());
        assert_eq!(r["seed"], 10 + r["repetition"].as_u64().unwrap());
    }
    let csvs = fs::read_dir(&root)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().join("metrics.csv").is_file())
        .count();
    assert_eq!(csvs, 9);
    // same repetition in two cells: same seed, hence same data
    let rep0: Vec<_> = runs.iter().filter(|r| r["repetition"] == 0).collect();
    assert!(rep0.iter().all(|r| r["seed"] == rep0[0]["seed"]));
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"base": {QUADRATIC}, "grid": {{"momentum": [0.0, 1.5]}}}}"#);
    let cfg = write_config(dir.path(), "grid.json", &body);
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let index: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("grid/index.json")).unwrap())
            .unwrap();
    assert_eq!(index["succeeded"], 1);
    assert_eq!(index["failed"], 1);

    let empty = format!(r#"{{"base": {QUADRATIC}, "grid": {{}}}}"#);
    let cfg = write_config(dir.path(), "empty.json", &empty);
    let out = run(&["sweep", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_and_fault_injection_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["verify"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let checks = text.lines().filter(|l| l.starts_with("PASS")).count();
    assert!(checks >= 8, "{text}");

    let out = run(&["verify", "--fault-inject"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text
        .lines()
        .any(|l| l.starts_with("FAIL") && l.contains("lemma1_recurrence")));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lemma1_recurrence"));
}

#[test]
fn report_merges_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "quad.json", QUADRATIC);
    let sgd = dir.path().join("sgd");
    let block = dir.path().join("block");
    for (o, opt) in [(&sgd, "full_precision"), (&block, "dist_ef")] {
        let s = format!("optimizer={opt}");
        let out = run(
            &[
                "run",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                o.to_str().unwrap(),
                "--set",
                &s,
            ],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let report = dir.path().join("report");
    let out = run(
        &[
            "report",
            sgd.to_str().unwrap(),
            block.to_str().unwrap(),
            dir.path().join("missing").to_str().unwrap(),
            "--out",
            report.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let merged = fs::read_to_string(report.join("comparison.csv")).unwrap();
    let mut lines = merged.lines();
    assert!(lines.next().unwrap().starts_with("run_id,t,loss"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 100);
    assert!(rows[0].starts_with("sgd,0,"));
    assert!(rows[50].starts_with("block,0,"));
    // bits total = T × comm_cost: full precision 64Md, blockwise 2Md + 64MB
    let summary = fs::read_to_string(report.join("summary.txt")).unwrap();
    assert!(
        summary.contains(&(50 * 64 * 2 * 12).to_string()),
        "{summary}"
    );
    assert!(
        summary.contains(&(50 * (2 * 2 * 12 + 64 * 2 * 3)).to_string()),
        "{summary}"
    );
    assert!(summary.contains("skipped"));

    let empty = dir.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let out = run(&["report", empty.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
