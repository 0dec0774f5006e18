//! Behavior of the `negotiated` binary: exit codes, emitted files, report
//! validation.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_negotiated"))
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("negotiated-cli-{name}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("usage:"));
}

#[test]
fn unknown_command_fails_with_usage() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_config_value_is_a_runtime_error() {
    let out = bin().args(["run", "--rate", "nonsense"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("error:"), "{text}");
}

#[test]
fn simulate_capacity_prints_equal_shares() {
    let out = bin()
        .args(["simulate-capacity", "--rate", "0.8", "--tasks", "50"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let mut shares = Vec::new();
    for line in text.lines().skip(1) {
        let (_, share) = line.split_once(',').unwrap();
        shares.push(share.parse::<f64>().unwrap());
    }
    assert_eq!(shares.len(), 50);
    let min = shares.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = shares.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(max - min < 1e-9);
}

#[test]
fn simulate_capacity_fixed_plasticity_decays() {
    let out = bin()
        .args(["simulate-capacity", "--rate", "0.8", "--tasks", "10", "--plasticity", "fixed:1.0"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    let shares: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse().unwrap())
        .collect();
    for pair in shares.windows(2) {
        assert!(pair[0] < pair[1]);
    }
}

#[test]
fn run_and_report_round_trip() {
    let dir = temp_dir("run-report");
    let out_dir = dir.join("out");
    let out = bin()
        .args([
            "run",
            "--dataset", "synthetic",
            "--synthetic-per-class", "60",
            "--epochs-per-task", "10",
            "--seeds", "0",
            "--out-dir", out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let run_dir = out_dir.join("negotiated-seed-0");
    for file in [
        "config.txt",
        "accuracy_matrix.csv",
        "metrics.csv",
        "assignments.csv",
        "report.txt",
        "accuracy.svg",
    ] {
        assert!(run_dir.join(file).exists(), "missing {file}");
    }
    assert!(out_dir.join("negotiated-summary.csv").exists());

    let report = bin()
        .args(["report", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(report.status.success());
    let text = String::from_utf8_lossy(&report.stdout);
    assert!(text.contains("avg_acc cross-check: OK"), "{text}");
}

#[test]
fn report_detects_tampered_metrics() {
    let dir = temp_dir("tamper");
    let out_dir = dir.join("out");
    let status = bin()
        .args([
            "run",
            "--dataset", "synthetic",
            "--synthetic-per-class", "40",
            "--epochs-per-task", "6",
            "--seeds", "0",
            "--out-dir", out_dir.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let run_dir = out_dir.join("negotiated-seed-0");
    let metrics = run_dir.join("metrics.csv");
    let text = std::fs::read_to_string(&metrics).unwrap();
    let tampered: String = text
        .lines()
        .map(|l| {
            if l.starts_with("avg_acc,") {
                "avg_acc,0.123456".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&metrics, tampered).unwrap();

    let report = bin()
        .args(["report", run_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(report.status.code(), Some(1));
    let err = String::from_utf8_lossy(&report.stderr);
    assert!(err.contains("mismatch"), "{err}");
}

#[test]
fn sweep_writes_csv_and_chart() {
    let dir = temp_dir("sweep");
    let out_dir = dir.join("out");
    let out = bin()
        .args([
            "sweep",
            "--dataset", "synthetic",
            "--synthetic-per-class", "40",
            "--epochs-per-task", "6",
            "--seeds", "0",
            "--rates", "0.5,0.7",
            "--out-dir", out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + 2 cells
    assert!(out_dir.join("sweep.svg").exists());
}
