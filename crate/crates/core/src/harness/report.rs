//! Report persistence: CSV files, the versioned run-report text file and the
//! SVG plots. Floats are written in Rust's shortest round-trip form, so
//! re-parsing a CSV reproduces the values bit-exactly.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::{average_incremental_accuracy, AccuracyMatrix, RunReport};

use super::plot::{line_chart, Series};
use super::runner::SweepResult;

pub const REPORT_HEADER: &str = "negotiated-run-report v1";

/// Writes every artifact of one run into `dir` and returns the paths:
/// config snapshot, accuracy-matrix CSV, metrics CSV, assignment CSV, the
/// versioned report file and the accuracy SVG.
pub fn emit_run_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| io_context(e, dir))?;
    let mut written = Vec::new();

    let config_path = dir.join("config.txt");
    fs::write(&config_path, &report.config_snapshot).map_err(|e| io_context(e, &config_path))?;
    written.push(config_path);

    let matrix_path = dir.join("accuracy_matrix.csv");
    let mut matrix_csv = String::from("step,task,accuracy\n");
    for (step, row) in report.matrix.rows().iter().enumerate() {
        for (task, acc) in row.iter().enumerate() {
            matrix_csv.push_str(&format!("{step},{task},{acc}\n"));
        }
    }
    fs::write(&matrix_path, matrix_csv).map_err(|e| io_context(e, &matrix_path))?;
    written.push(matrix_path);

    let metrics_path = dir.join("metrics.csv");
    let mut metrics_csv = String::from("metric,value\n");
    metrics_csv.push_str(&format!("seed,{}\n", report.seed));
    metrics_csv.push_str(&format!("avg_acc,{}\n", report.avg_acc));
    metrics_csv.push_str(&format!("step_averaged_acc,{}\n", report.step_averaged_acc));
    metrics_csv.push_str(&format!("forgetting_rate,{}\n", report.forgetting_rate));
    for (k, rate) in report.task_rates.iter().enumerate() {
        metrics_csv.push_str(&format!("negotiation_rate_task_{k},{rate}\n"));
    }
    fs::write(&metrics_path, metrics_csv).map_err(|e| io_context(e, &metrics_path))?;
    written.push(metrics_path);

    let assign_path = dir.join("assignments.csv");
    let mut assign_csv = String::from("class_label,row_index,code_bits\n");
    for a in &report.assignments {
        assign_csv.push_str(&format!("{},{},{}\n", a.class_label, a.row_index, a.code_bits));
    }
    fs::write(&assign_path, assign_csv).map_err(|e| io_context(e, &assign_path))?;
    written.push(assign_path);

    let report_path = dir.join("report.txt");
    fs::write(&report_path, render_report(report)).map_err(|e| io_context(e, &report_path))?;
    written.push(report_path);

    let svg_path = dir.join("accuracy.svg");
    fs::write(&svg_path, accuracy_chart(report)).map_err(|e| io_context(e, &svg_path))?;
    written.push(svg_path);

    Ok(written)
}

fn io_context(err: std::io::Error, path: &Path) -> Error {
    Error::Io(std::io::Error::new(
        err.kind(),
        format!("{}: {err}", path.display()),
    ))
}

fn render_report(report: &RunReport) -> String {
    let mut text = String::new();
    text.push_str(REPORT_HEADER);
    text.push('\n');
    text.push_str(&format!("seed: {}\n", report.seed));
    text.push_str(&format!("avg_acc: {}\n", report.avg_acc));
    text.push_str(&format!("step_averaged_acc: {}\n", report.step_averaged_acc));
    text.push_str(&format!("forgetting_rate: {}\n", report.forgetting_rate));
    text.push_str(&format!("wall_clock_secs: {:.3}\n", report.wall_clock_secs));
    text.push_str("task_rates:");
    for rate in &report.task_rates {
        text.push_str(&format!(" {rate}"));
    }
    text.push('\n');
    text.push_str("assignments (class -> row, code):\n");
    for a in &report.assignments {
        text.push_str(&format!("  {} -> {} {}\n", a.class_label, a.row_index, a.code_bits));
    }
    text.push_str("accuracy matrix (rows = after task t, columns = task k):\n");
    for row in report.matrix.rows() {
        text.push_str("  ");
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        text.push_str(&cells.join(" "));
        text.push('\n');
    }
    text.push_str("config:\n");
    for line in report.config_snapshot.lines() {
        text.push_str("  ");
        text.push_str(line);
        text.push('\n');
    }
    text
}

fn accuracy_chart(report: &RunReport) -> String {
    let steps = report.matrix.num_steps();
    let series: Vec<Series> = (0..steps)
        .map(|task| Series {
            label: format!("task {task}"),
            points: (task..steps)
                .map(|step| (step as f64, report.matrix.entry(step, task)))
                .collect(),
        })
        .collect();
    line_chart(
        "per-task test accuracy over incremental steps",
        "training step",
        "accuracy",
        &series,
    )
}

/// Parses an `accuracy_matrix.csv` written by `emit_run_report`.
pub fn parse_accuracy_matrix_csv(text: &str) -> Result<AccuracyMatrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Data {
                offset: i as u64,
                message: format!("matrix csv line {}: expected 3 fields", i + 1),
            });
        }
        let step: usize = fields[0].parse().map_err(|_| bad_field(i, "step"))?;
        let task: usize = fields[1].parse().map_err(|_| bad_field(i, "task"))?;
        let acc: f64 = fields[2].parse().map_err(|_| bad_field(i, "accuracy"))?;
        if rows.len() <= step {
            rows.resize(step + 1, Vec::new());
        }
        if rows[step].len() != task {
            return Err(Error::Data {
                offset: i as u64,
                message: format!("matrix csv line {}: tasks out of order", i + 1),
            });
        }
        rows[step].push(acc);
    }
    let mut matrix = AccuracyMatrix::new();
    for row in rows {
        matrix.push_row(row)?;
    }
    Ok(matrix)
}

/// Parses a `metrics.csv` written by `emit_run_report` into (metric, value)
/// pairs (values kept as strings so integers survive untouched).
pub fn parse_metrics_csv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once(',') else {
            return Err(Error::Data {
                offset: i as u64,
                message: format!("metrics csv line {}: expected 'metric,value'", i + 1),
            });
        };
        pairs.push((key.to_string(), value.to_string()));
    }
    Ok(pairs)
}

fn bad_field(line: usize, what: &str) -> Error {
    Error::Data {
        offset: line as u64,
        message: format!("matrix csv line {}: bad {what}", line + 1),
    }
}

/// Writes sweep artifacts: `sweep.csv` (rate, seed, avg_acc), a failure list
/// when cells died, and the accuracy-vs-rate chart.
pub fn emit_sweep_result(sweep: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>> {
    if sweep.cells.is_empty() {
        return Err(Error::Config("refusing to emit an empty sweep".into()));
    }
    fs::create_dir_all(dir).map_err(|e| io_context(e, dir))?;
    let mut written = Vec::new();

    let csv_path = dir.join("sweep.csv");
    let mut csv = String::from("rate,seed,avg_acc\n");
    for cell in &sweep.cells {
        if let Ok(acc) = &cell.outcome {
            csv.push_str(&format!("{},{},{}\n", cell.rate, cell.seed, acc));
        }
    }
    fs::write(&csv_path, csv).map_err(|e| io_context(e, &csv_path))?;
    written.push(csv_path);

    if sweep.failed_cells() > 0 {
        let fail_path = dir.join("sweep_failures.csv");
        let mut csv = String::from("rate,seed,error\n");
        for cell in &sweep.cells {
            if let Err(message) = &cell.outcome {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    cell.rate,
                    cell.seed,
                    message.replace(',', ";")
                ));
            }
        }
        fs::write(&fail_path, csv).map_err(|e| io_context(e, &fail_path))?;
        written.push(fail_path);
    }

    let svg_path = dir.join("sweep.svg");
    let mean_points: Vec<(f64, f64)> = sweep
        .rates()
        .into_iter()
        .filter_map(|rate| sweep.mean_for_rate(rate).map(|m| (rate, m)))
        .collect();
    let seed_points: Vec<(f64, f64)> = sweep
        .cells
        .iter()
        .filter_map(|c| c.outcome.as_ref().ok().map(|&a| (c.rate, a)))
        .collect();
    let svg = line_chart(
        "mean average accuracy vs initial negotiation rate",
        "initial negotiation rate",
        "average accuracy",
        &[
            Series {
                label: "seed mean".into(),
                points: mean_points,
            },
            Series {
                label: "per-seed".into(),
                points: seed_points,
            },
        ],
    );
    fs::write(&svg_path, svg).map_err(|e| io_context(e, &svg_path))?;
    written.push(svg_path);

    Ok(written)
}

/// Re-derives the average incremental accuracy from an emitted run
/// directory; used to verify round-trips and by the `report` subcommand.
pub fn recompute_avg_acc(dir: &Path) -> Result<f64> {
    let path = dir.join("accuracy_matrix.csv");
    let text = fs::read_to_string(&path).map_err(|e| io_context(e, &path))?;
    let matrix = parse_accuracy_matrix_csv(&text)?;
    average_incremental_accuracy(&matrix)
}
