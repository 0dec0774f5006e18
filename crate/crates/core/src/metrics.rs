//! Minimum-distance classification over assigned codes and the
//! class-incremental accuracy metrics.

use crate::data::TaskSequence;
use crate::error::{Error, Result};
use crate::negotiation::{argmin_first, representation_distance, DEFAULT_EPSILON};
use crate::net::{Network, SigmoidCfg};
use crate::tensor::Tensor;
use crate::walsh::WalshRegistry;

/// Distance between a network output and a class code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    /// The BCE form used for assignment (default; keeps training and
    /// inference consistent).
    RepresentationBce,
    /// Squared Euclidean distance to the raw code bits (ablation switch).
    Euclidean,
}

#[derive(Debug, Clone, Copy)]
pub struct EvalConfig {
    pub epsilon: f64,
    pub sigmoid: SigmoidCfg,
    pub distance: DistanceKind,
    /// Sub-batch size for chunked inference.
    pub sub_batch: usize,
}

impl EvalConfig {
    pub fn bce(sigmoid: SigmoidCfg) -> Self {
        EvalConfig {
            epsilon: DEFAULT_EPSILON,
            sigmoid,
            distance: DistanceKind::RepresentationBce,
            sub_batch: 256,
        }
    }
}

fn class_distance(output: &[f64], code: &[u8], cfg: &EvalConfig) -> f64 {
    match cfg.distance {
        DistanceKind::RepresentationBce => {
            representation_distance(output, code, cfg.epsilon, cfg.sigmoid)
        }
        DistanceKind::Euclidean => output
            .iter()
            .zip(code)
            .map(|(&p, &b)| {
                let d = p - f64::from(b);
                d * d
            })
            .sum(),
    }
}

/// Nearest-code prediction for one already-computed output vector. Ties go
/// to the lowest class label.
pub fn classify_outputs(
    output: &[f64],
    reg: &WalshRegistry,
    seen_classes: &[usize],
    cfg: &EvalConfig,
) -> Result<usize> {
    if seen_classes.is_empty() {
        return Err(Error::Config("classification needs at least one seen class".into()));
    }
    let mut seen = seen_classes.to_vec();
    seen.sort_unstable();
    let mut distances = Vec::with_capacity(seen.len());
    for &class in &seen {
        let code = reg.representation_of(class)?;
        distances.push((class, class_distance(output, code, cfg)));
    }
    Ok(argmin_first(distances.into_iter()).expect("nonempty"))
}

/// Minimum-distance classification of a single sample (batch of one).
pub fn mdn_classify(
    net: &Network,
    sample: &Tensor,
    reg: &WalshRegistry,
    seen_classes: &[usize],
    cfg: &EvalConfig,
) -> Result<usize> {
    let out = net.forward(sample)?;
    classify_outputs(out.row(0), reg, seen_classes, cfg)
}

/// Nearest-code predictions for a whole batch.
pub fn classify_batch(
    net: &Network,
    batch: &Tensor,
    reg: &WalshRegistry,
    seen_classes: &[usize],
    cfg: &EvalConfig,
) -> Result<Vec<usize>> {
    let outputs = net.forward_batched(batch, cfg.sub_batch)?;
    (0..outputs.batch_len())
        .map(|i| classify_outputs(outputs.row(i), reg, seen_classes, cfg))
        .collect()
}

/// Test accuracy on every task up to `upto_task`, classifying against all
/// classes seen so far (no task oracle at inference).
pub fn evaluate_tasks(
    net: &Network,
    reg: &WalshRegistry,
    tasks: &TaskSequence,
    upto_task: usize,
    cfg: &EvalConfig,
) -> Result<Vec<f64>> {
    let seen: Vec<usize> = tasks.tasks[..=upto_task]
        .iter()
        .flat_map(|t| t.classes.iter().copied())
        .collect();
    let mut row = Vec::with_capacity(upto_task + 1);
    for task in &tasks.tasks[..=upto_task] {
        let batch = tasks.test.gather(&task.test_indices);
        let predicted = classify_batch(net, &batch, reg, &seen, cfg)?;
        let correct = predicted
            .iter()
            .zip(task.test_indices.iter().map(|&i| tasks.test.labels[i]))
            .filter(|(p, t)| **p == *t)
            .count();
        row.push(correct as f64 / task.test_indices.len().max(1) as f64);
    }
    Ok(row)
}

/// Lower-triangular record: `entry(t, k)` is accuracy on task `k`'s test
/// split measured after training task `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<f64>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        AccuracyMatrix { rows: Vec::new() }
    }

    /// Appends the row measured after training the next task; row `t` must
    /// hold `t + 1` accuracies in `[0, 1]`.
    pub fn push_row(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(Error::Config(format!(
                "row {} must have {} entries, got {}",
                self.rows.len(),
                self.rows.len() + 1,
                row.len()
            )));
        }
        if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Config("accuracy outside [0, 1]".into()));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn entry(&self, step: usize, task: usize) -> f64 {
        self.rows[step][task]
    }

    pub fn num_steps(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn final_row(&self) -> Option<&[f64]> {
        self.rows.last().map(|r| r.as_slice())
    }
}

/// Mean accuracy over all tasks after the final training step.
pub fn average_incremental_accuracy(matrix: &AccuracyMatrix) -> Result<f64> {
    let Some(last) = matrix.final_row() else {
        return Err(Error::Config("empty accuracy matrix".into()));
    };
    if last.len() != matrix.num_steps() {
        return Err(Error::Config("accuracy matrix is incomplete".into()));
    }
    Ok(last.iter().sum::<f64>() / last.len() as f64)
}

/// Secondary reading: the per-step mean accuracy, averaged over steps.
pub fn step_averaged_accuracy(matrix: &AccuracyMatrix) -> Result<f64> {
    if matrix.num_steps() == 0 {
        return Err(Error::Config("empty accuracy matrix".into()));
    }
    let total: f64 = matrix
        .rows()
        .iter()
        .map(|row| row.iter().sum::<f64>() / row.len() as f64)
        .sum();
    Ok(total / matrix.num_steps() as f64)
}

/// Accuracy drop on the first task: right after learning it minus after all
/// training. Zero for a single task (or an empty matrix).
pub fn forgetting_rate(matrix: &AccuracyMatrix) -> f64 {
    if matrix.num_steps() == 0 {
        return 0.0;
    }
    matrix.entry(0, 0) - matrix.entry(matrix.num_steps() - 1, 0)
}

/// One class's code assignment, as serialized into reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentRecord {
    pub class_label: usize,
    pub row_index: usize,
    pub code_bits: String,
}

/// Everything a single run produces.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config_snapshot: String,
    pub seed: u64,
    pub matrix: AccuracyMatrix,
    pub avg_acc: f64,
    pub step_averaged_acc: f64,
    pub forgetting_rate: f64,
    pub assignments: Vec<AssignmentRecord>,
    /// Negotiation rate used by each task's targets (empty for baselines).
    pub task_rates: Vec<f64>,
    pub wall_clock_secs: f64,
}
