//! `negotiated`: class-incremental continual learning experiments with
//! negotiated Walsh-code representations.
//!
//! Subcommands:
//!   run                negotiated training over the configured seeds
//!   baseline           one-hot softmax baseline over the same seeds
//!   sweep              negotiated runs over a grid of initial rates
//!   simulate-capacity  per-task capacity shares of the rate scheduler
//!   report             summarize and validate an emitted run directory
//!
//! Any config key can be overridden on the command line as `--key value`
//! (dashes map to underscores), optionally on top of `--config FILE`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use negotiated_core::harness::{
    capacity_table, emit_run_report, emit_sweep_result, parse_accuracy_matrix_csv,
    parse_metrics_csv, recompute_avg_acc, run_baseline, run_experiment, run_sweep,
    ExperimentConfig, REPORT_HEADER,
};
use negotiated_core::metrics::{forgetting_rate, RunReport};
use negotiated_core::negotiation::PlasticityMode;

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = args.first() else {
        print_usage();
        return ExitCode::from(2);
    };
    let rest = &args[1..];
    let outcome = match command.as_str() {
        "run" => cmd_run(rest, false),
        "baseline" => cmd_run(rest, true),
        "sweep" => cmd_sweep(rest),
        "simulate-capacity" => cmd_simulate_capacity(rest),
        "report" => cmd_report(rest),
        "help" | "--help" | "-h" => {
            print_usage();
            return ExitCode::SUCCESS;
        }
        other => {
            eprintln!("unknown command '{other}'");
            print_usage();
            return ExitCode::from(2);
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::FAILURE
        }
    }
}

fn print_usage() {
    println!("usage: negotiated <command> [--config FILE] [--key value ...]");
    println!();
    println!("commands:");
    println!("  run                negotiated training over the configured seeds");
    println!("  baseline           one-hot softmax baseline over the same seeds");
    println!("  sweep              negotiated runs over --rates R1,R2,... per seed");
    println!("  simulate-capacity  capacity shares for --rate over --tasks tasks");
    println!("  report DIR         summarize and validate an emitted run directory");
    println!();
    println!("config keys (settable as --key value): dataset, data_dir, num_tasks,");
    println!("  walsh_size, rate, plasticity (optimal|fixed:P), softener,");
    println!("  softener_coeff, epsilon, epochs_per_task, batch_size, optimizer,");
    println!("  learning_rate, momentum, distance (bce|euclidean), seeds, out_dir,");
    println!("  synthetic_classes, synthetic_per_class, data_seed");
    println!();
    println!("examples:");
    println!("  negotiated run --dataset mnist --data-dir data --out-dir runs/mnist");
    println!("  negotiated sweep --dataset mnist --rates 0.5,0.6,0.7,0.8,0.85");
    println!("  negotiated simulate-capacity --rate 0.8 --tasks 50");
}

/// Parses `--key value` pairs; `--config FILE` loads the file first, and the
/// remaining pairs override it. Returns the config plus leftover options the
/// caller handles itself.
fn parse_config(args: &[String], extra_keys: &[&str]) -> Result<(ExperimentConfig, Vec<(String, String)>), String> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut config_file: Option<PathBuf> = None;
    let mut i = 0;
    while i < args.len() {
        let arg = &args[i];
        let Some(key) = arg.strip_prefix("--") else {
            return Err(format!("unexpected argument '{arg}' (expected --key value)"));
        };
        let Some(value) = args.get(i + 1) else {
            return Err(format!("--{key} needs a value"));
        };
        if key == "config" {
            config_file = Some(PathBuf::from(value));
        } else {
            pairs.push((key.replace('-', "_"), value.clone()));
        }
        i += 2;
    }

    let mut cfg = if let Some(path) = config_file {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("{}: {e}", path.display()))?;
        ExperimentConfig::from_text(&text).map_err(|e| e.to_string())?
    } else if let Some((_, value)) = pairs.iter().find(|(k, _)| k == "dataset") {
        let dataset =
            negotiated_core::harness::DatasetId::parse(value).map_err(|e| e.to_string())?;
        ExperimentConfig::preset(dataset)
    } else {
        ExperimentConfig::preset(negotiated_core::harness::DatasetId::Synthetic)
    };

    let mut extras = Vec::new();
    for (key, value) in pairs {
        if extra_keys.contains(&key.as_str()) {
            extras.push((key, value));
        } else {
            cfg.apply_key(&key, &value).map_err(|e| e.to_string())?;
        }
    }
    Ok((cfg, extras))
}

fn print_run_line(kind: &str, report: &RunReport) {
    println!(
        "{kind} seed {}: avg_acc {:.4}  step_averaged {:.4}  forgetting {:.4}  ({:.1} s)",
        report.seed, report.avg_acc, report.step_averaged_acc, report.forgetting_rate,
        report.wall_clock_secs
    );
}

fn cmd_run(args: &[String], baseline: bool) -> Result<(), String> {
    let (cfg, _) = parse_config(args, &[])?;
    let kind = if baseline { "baseline" } else { "negotiated" };
    let mut reports = Vec::new();
    for &seed in &cfg.seeds {
        let report = if baseline {
            run_baseline(&cfg, seed)
        } else {
            run_experiment(&cfg, seed)
        }
        .map_err(|e| format!("{kind} run with seed {seed} failed: {e}"))?;
        print_run_line(kind, &report);
        let dir = cfg.out_dir.join(format!("{kind}-seed-{seed}"));
        emit_run_report(&report, &dir).map_err(|e| e.to_string())?;
        reports.push(report);
    }

    let mean: f64 = reports.iter().map(|r| r.avg_acc).sum::<f64>() / reports.len() as f64;
    let mean_forgetting: f64 =
        reports.iter().map(|r| r.forgetting_rate).sum::<f64>() / reports.len() as f64;
    println!(
        "{kind} mean over {} seed(s): avg_acc {:.4}  forgetting {:.4}",
        reports.len(),
        mean,
        mean_forgetting
    );

    let mut summary = String::from("seed,avg_acc,step_averaged_acc,forgetting_rate\n");
    for r in &reports {
        summary.push_str(&format!(
            "{},{},{},{}\n",
            r.seed, r.avg_acc, r.step_averaged_acc, r.forgetting_rate
        ));
    }
    let summary_path = cfg.out_dir.join(format!("{kind}-summary.csv"));
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| e.to_string())?;
    std::fs::write(&summary_path, summary).map_err(|e| e.to_string())?;
    println!("wrote {}", summary_path.display());
    Ok(())
}

fn cmd_sweep(args: &[String]) -> Result<(), String> {
    let (cfg, extras) = parse_config(args, &["rates"])?;
    let rates_text = extras
        .iter()
        .find(|(k, _)| k == "rates")
        .map(|(_, v)| v.clone())
        .ok_or("sweep needs --rates R1,R2,...")?;
    let grid: Vec<f64> = rates_text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("bad rate '{s}'")))
        .collect::<Result<_, _>>()?;

    let sweep = run_sweep(&cfg, &grid).map_err(|e| e.to_string())?;
    for rate in sweep.rates() {
        match sweep.mean_for_rate(rate) {
            Some(mean) => println!("rate {rate}: mean avg_acc {mean:.4}"),
            None => println!("rate {rate}: all seeds failed"),
        }
    }
    let written = emit_sweep_result(&sweep, &cfg.out_dir).map_err(|e| e.to_string())?;
    for path in written {
        println!("wrote {}", path.display());
    }
    if sweep.failed_cells() > 0 {
        return Err(format!("{} sweep cell(s) failed", sweep.failed_cells()));
    }
    Ok(())
}

fn cmd_simulate_capacity(args: &[String]) -> Result<(), String> {
    let mut rate = 0.8;
    let mut tasks = 10usize;
    let mut plasticity = PlasticityMode::Optimal;
    let mut out: Option<PathBuf> = None;
    let mut i = 0;
    while i < args.len() {
        let value = args
            .get(i + 1)
            .ok_or_else(|| format!("{} needs a value", args[i]))?;
        match args[i].as_str() {
            "--rate" => rate = value.parse().map_err(|_| format!("bad rate '{value}'"))?,
            "--tasks" => tasks = value.parse().map_err(|_| format!("bad task count '{value}'"))?,
            "--plasticity" => {
                plasticity = if value == "optimal" {
                    PlasticityMode::Optimal
                } else if let Some(rest) = value.strip_prefix("fixed:") {
                    PlasticityMode::Fixed(
                        rest.parse().map_err(|_| format!("bad multiplier '{rest}'"))?,
                    )
                } else {
                    return Err(format!("bad plasticity '{value}'"));
                }
            }
            "--out" => out = Some(PathBuf::from(value)),
            other => return Err(format!("unknown option '{other}'")),
        }
        i += 2;
    }

    let table = capacity_table(rate, tasks, plasticity).map_err(|e| e.to_string())?;
    let mut csv = String::from("task_index,share\n");
    for (task, share) in &table {
        csv.push_str(&format!("{task},{share}\n"));
    }
    match out {
        Some(path) => {
            std::fs::write(&path, csv).map_err(|e| format!("{}: {e}", path.display()))?;
            println!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_report(args: &[String]) -> Result<(), String> {
    let [dir] = args else {
        return Err("usage: negotiated report RUN_DIR".into());
    };
    let dir = Path::new(dir);
    let report_path = dir.join("report.txt");
    let text = std::fs::read_to_string(&report_path)
        .map_err(|e| format!("{}: {e}", report_path.display()))?;
    if !text.starts_with(REPORT_HEADER) {
        return Err(format!(
            "{} is not a {REPORT_HEADER} file",
            report_path.display()
        ));
    }
    print!("{text}");

    // Cross-check: the matrix CSV must reproduce the stored metrics exactly.
    let metrics_text = std::fs::read_to_string(dir.join("metrics.csv"))
        .map_err(|e| format!("metrics.csv: {e}"))?;
    let metrics = parse_metrics_csv(&metrics_text).map_err(|e| e.to_string())?;
    let stored = |key: &str| -> Result<f64, String> {
        metrics
            .iter()
            .find(|(k, _)| k == key)
            .ok_or(format!("metrics.csv has no {key}"))?
            .1
            .parse()
            .map_err(|_| format!("metrics.csv {key} is not a number"))
    };

    let avg = recompute_avg_acc(dir).map_err(|e| e.to_string())?;
    let stored_avg = stored("avg_acc")?;
    if avg.to_bits() != stored_avg.to_bits() {
        return Err(format!(
            "avg_acc mismatch: matrix gives {avg}, metrics.csv has {stored_avg}"
        ));
    }

    let matrix_text = std::fs::read_to_string(dir.join("accuracy_matrix.csv"))
        .map_err(|e| format!("accuracy_matrix.csv: {e}"))?;
    let matrix = parse_accuracy_matrix_csv(&matrix_text).map_err(|e| e.to_string())?;
    let forgetting = forgetting_rate(&matrix);
    let stored_forgetting = stored("forgetting_rate")?;
    if forgetting.to_bits() != stored_forgetting.to_bits() {
        return Err(format!(
            "forgetting_rate mismatch: matrix gives {forgetting}, metrics.csv has {stored_forgetting}"
        ));
    }

    println!("avg_acc cross-check: OK ({avg})");
    println!("forgetting_rate cross-check: OK ({forgetting})");
    Ok(())
}
