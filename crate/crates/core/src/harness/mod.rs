//! Experiment orchestration: configuration, full runs, sweeps, persistence.

mod config;
mod plot;
mod report;
mod runner;

pub use config::{
    baseline_specs, model_preset, negotiated_specs, parse_kv, DatasetId, ExperimentConfig,
    ModelPreset, OptimizerChoice,
};
pub use plot::{line_chart, Series};
pub use report::{
    emit_run_report, emit_sweep_result, parse_accuracy_matrix_csv, parse_metrics_csv,
    recompute_avg_acc, REPORT_HEADER,
};
pub use runner::{
    capacity_table, load_datasets, run_baseline, run_experiment, run_sweep, SweepCell, SweepResult,
};
