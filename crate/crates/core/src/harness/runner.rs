//! End-to-end experiment execution: the negotiated run, the one-hot
//! baseline, and negotiation-rate sweeps.

use std::time::Instant;

use crate::data::{load_cifar, load_idx, split_tasks, synthetic_dataset, CifarVariant, LabeledDataset, Split, TaskSequence};
use crate::error::{Error, Result};
use crate::metrics::{
    average_incremental_accuracy, evaluate_tasks, forgetting_rate, step_averaged_accuracy,
    AccuracyMatrix, AssignmentRecord, EvalConfig, RunReport,
};
use crate::negotiation::{blend_targets, nearest_available_row, NegotiationState};
use crate::net::{
    backward_and_step, backward_and_step_softmax, build_network, Network, OptimizerState,
};
use crate::rng::Rng;
use crate::walsh::{build_walsh, WalshRegistry};

use super::config::{
    baseline_specs, model_preset, negotiated_specs, DatasetId, ExperimentConfig, OptimizerChoice,
};

const EVAL_SUB_BATCH: usize = 256;

/// Loads the train/test pair for the configured dataset.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match cfg.dataset {
        DatasetId::Mnist | DatasetId::FashionMnist => {
            let sub = match cfg.dataset {
                DatasetId::Mnist => "mnist",
                _ => "fashion-mnist",
            };
            let dir = cfg.data_dir.join(sub);
            let train = load_idx(
                &dir.join("train-images-idx3-ubyte"),
                &dir.join("train-labels-idx1-ubyte"),
                Split::Train,
            )?;
            let test = load_idx(
                &dir.join("t10k-images-idx3-ubyte"),
                &dir.join("t10k-labels-idx1-ubyte"),
                Split::Test,
            )?;
            Ok((train, test))
        }
        DatasetId::Cifar10 => {
            let dir = cfg.data_dir.join("cifar-10-batches-bin");
            Ok((
                load_cifar(&dir, CifarVariant::Cifar10, Split::Train)?,
                load_cifar(&dir, CifarVariant::Cifar10, Split::Test)?,
            ))
        }
        DatasetId::Cifar100 => {
            let dir = cfg.data_dir.join("cifar-100-binary");
            Ok((
                load_cifar(&dir, CifarVariant::Cifar100, Split::Train)?,
                load_cifar(&dir, CifarVariant::Cifar100, Split::Test)?,
            ))
        }
        DatasetId::Synthetic => {
            let train = synthetic_dataset(cfg.synthetic_classes, cfg.synthetic_per_class, cfg.data_seed);
            let mut test = synthetic_dataset(
                cfg.synthetic_classes,
                (cfg.synthetic_per_class / 5).max(20),
                cfg.data_seed + 1,
            );
            test.split = Split::Test;
            Ok((train, test))
        }
    }
}

fn optimizer_for(cfg: &ExperimentConfig, net: &Network) -> Result<OptimizerState> {
    match cfg.optimizer {
        OptimizerChoice::Adam => OptimizerState::adam(net, cfg.learning_rate),
        OptimizerChoice::SgdMomentum => {
            OptimizerState::sgd_momentum(net, cfg.learning_rate, cfg.momentum)
        }
    }
}

fn prepared_tasks(cfg: &ExperimentConfig) -> Result<TaskSequence> {
    let (train, test) = load_datasets(cfg)?;
    let preset = model_preset(cfg.dataset);
    if train.image_dims() != preset.input {
        return Err(Error::Config(format!(
            "dataset {} yields {:?} but the preset expects {:?}",
            cfg.dataset.name(),
            train.image_dims(),
            preset.input
        )));
    }
    split_tasks(train, test, cfg.num_tasks, None)
}

fn shuffle_rng(seed: u64) -> Rng {
    // Distinct stream from the init RNG inside build_network.
    Rng::new(seed ^ 0x0053_4855_4646_4c45)
}

/// Sorted class labels of one task (assignment order within a task).
fn sorted_classes(classes: &[usize]) -> Vec<usize> {
    let mut sorted = classes.to_vec();
    sorted.sort_unstable();
    sorted
}

/// Runs Algorithm-style negotiated training for one seed and returns the
/// full report.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let tasks = prepared_tasks(cfg)?;
    let num_classes = tasks.train.num_classes;
    if cfg.walsh_size < num_classes {
        return Err(Error::Config(format!(
            "walsh size {} cannot represent {num_classes} classes",
            cfg.walsh_size
        )));
    }

    let mut registry = WalshRegistry::new(build_walsh(cfg.walsh_size));
    let preset = model_preset(cfg.dataset);
    let specs = negotiated_specs(&preset, registry.order(), cfg.sigmoid);
    let mut net = build_network(preset.input, &specs, seed)?;
    let mut opt = optimizer_for(cfg, &net)?;
    let mut state = NegotiationState::with_plasticity(cfg.initial_rate, cfg.plasticity)?;
    let eval_cfg = EvalConfig {
        epsilon: cfg.epsilon,
        sigmoid: cfg.sigmoid,
        distance: cfg.distance,
        sub_batch: EVAL_SUB_BATCH,
    };
    let mut rng = shuffle_rng(seed);

    let mut matrix = AccuracyMatrix::new();
    let mut task_rates = Vec::with_capacity(tasks.num_tasks());

    for (t, task) in tasks.tasks.iter().enumerate() {
        let context = |what: &str| format!("task {t}: {what}");
        let samples = tasks.train.gather(&task.train_indices);
        let labels = tasks.train.labels_at(&task.train_indices);

        // Pre-task predictions drive both the per-class code assignment and
        // the negotiated targets.
        let preds = net.forward_batched(&samples, EVAL_SUB_BATCH)?;
        let units = preds.row_len();
        for class in sorted_classes(&task.classes) {
            let rows: Vec<usize> = labels
                .iter()
                .enumerate()
                .filter_map(|(i, &l)| (l == class).then_some(i))
                .collect();
            if rows.is_empty() {
                return Err(Error::Config(context(&format!(
                    "class {class} has no training samples"
                ))));
            }
            let mut mean = vec![0.0; units];
            for &i in &rows {
                for (m, &v) in mean.iter_mut().zip(preds.row(i)) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= rows.len() as f64;
            }
            let row = nearest_available_row(&mean, &registry, cfg.epsilon, cfg.sigmoid)?;
            registry.mark_assigned(class, row)?;
        }

        let rate = state.rate();
        task_rates.push(rate);
        let targets = blend_targets(&preds, &labels, &registry, rate)?;
        state.next_rate();

        let mut order: Vec<usize> = (0..labels.len()).collect();
        for _ in 0..cfg.epochs_per_task {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = samples.select(chunk);
                let batch_targets = targets.select(chunk);
                backward_and_step(&mut net, &batch, &batch_targets, &mut opt)?;
            }
        }

        let row = evaluate_tasks(&net, &registry, &tasks, t, &eval_cfg)?;
        matrix.push_row(row)?;
    }

    let assignments = registry
        .assignments()
        .iter()
        .map(|(&class_label, &row_index)| AssignmentRecord {
            class_label,
            row_index,
            code_bits: registry.matrix().row_bits(row_index),
        })
        .collect();

    Ok(RunReport {
        config_snapshot: cfg.snapshot(),
        seed,
        avg_acc: average_incremental_accuracy(&matrix)?,
        step_averaged_acc: step_averaged_accuracy(&matrix)?,
        forgetting_rate: forgetting_rate(&matrix),
        matrix,
        assignments,
        task_rates,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// Argmax over the logits of the seen classes; ties go to the lowest label.
fn baseline_classify(logits: &[f64], seen: &[usize]) -> usize {
    let mut best = seen[0];
    let mut best_v = logits[seen[0]];
    for &class in &seen[1..] {
        if logits[class] > best_v {
            best = class;
            best_v = logits[class];
        }
    }
    best
}

fn baseline_evaluate(
    net: &Network,
    tasks: &TaskSequence,
    upto_task: usize,
) -> Result<Vec<f64>> {
    let seen: Vec<usize> = {
        let mut all: Vec<usize> = tasks.tasks[..=upto_task]
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect();
        all.sort_unstable();
        all
    };
    let mut row = Vec::with_capacity(upto_task + 1);
    for task in &tasks.tasks[..=upto_task] {
        let batch = tasks.test.gather(&task.test_indices);
        let outputs = net.forward_batched(&batch, EVAL_SUB_BATCH)?;
        let correct = (0..outputs.batch_len())
            .filter(|&i| {
                baseline_classify(outputs.row(i), &seen)
                    == tasks.test.labels[task.test_indices[i]]
            })
            .count();
        row.push(correct as f64 / task.test_indices.len().max(1) as f64);
    }
    Ok(row)
}

/// The control: identical trunk, one logit per class, one-hot softmax
/// cross-entropy, sequential task training with no negotiation and no code
/// assignment.
pub fn run_baseline(cfg: &ExperimentConfig, seed: u64) -> Result<RunReport> {
    cfg.validate()?;
    let started = Instant::now();
    let tasks = prepared_tasks(cfg)?;
    let num_classes = tasks.train.num_classes;

    let preset = model_preset(cfg.dataset);
    let specs = baseline_specs(&preset, num_classes);
    let mut net = build_network(preset.input, &specs, seed)?;
    let mut opt = optimizer_for(cfg, &net)?;
    let mut rng = shuffle_rng(seed);

    let mut matrix = AccuracyMatrix::new();
    for (t, task) in tasks.tasks.iter().enumerate() {
        let samples = tasks.train.gather(&task.train_indices);
        let labels = tasks.train.labels_at(&task.train_indices);
        let mut order: Vec<usize> = (0..labels.len()).collect();
        for _ in 0..cfg.epochs_per_task {
            rng.shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let batch = samples.select(chunk);
                let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                backward_and_step_softmax(&mut net, &batch, &batch_labels, &mut opt)?;
            }
        }
        matrix.push_row(baseline_evaluate(&net, &tasks, t)?)?;
    }

    Ok(RunReport {
        config_snapshot: cfg.snapshot(),
        seed,
        avg_acc: average_incremental_accuracy(&matrix)?,
        step_averaged_acc: step_averaged_accuracy(&matrix)?,
        forgetting_rate: forgetting_rate(&matrix),
        matrix,
        assignments: Vec::new(),
        task_rates: Vec::new(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    })
}

/// One (rate, seed) cell of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub rate: f64,
    pub seed: u64,
    /// Average incremental accuracy, or the error that killed the cell.
    pub outcome: std::result::Result<f64, String>,
}

#[derive(Debug, Clone, Default)]
pub struct SweepResult {
    pub cells: Vec<SweepCell>,
}

impl SweepResult {
    /// Distinct rates in grid order.
    pub fn rates(&self) -> Vec<f64> {
        let mut rates = Vec::new();
        for cell in &self.cells {
            if !rates.contains(&cell.rate) {
                rates.push(cell.rate);
            }
        }
        rates
    }

    /// Mean avg-acc over the successful seeds at `rate`.
    pub fn mean_for_rate(&self, rate: f64) -> Option<f64> {
        let values: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.rate == rate)
            .filter_map(|c| c.outcome.as_ref().ok().copied())
            .collect();
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.outcome.is_err()).count()
    }
}

/// Runs `run_experiment` per (rate, seed); failures are recorded per cell
/// and the sweep continues.
pub fn run_sweep(cfg: &ExperimentConfig, rate_grid: &[f64]) -> Result<SweepResult> {
    if rate_grid.is_empty() {
        return Err(Error::Config("sweep needs a non-empty rate grid".into()));
    }
    for &rate in rate_grid {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!(
                "sweep rate {rate} outside [0, 1)"
            )));
        }
    }
    let mut cells = Vec::with_capacity(rate_grid.len() * cfg.seeds.len());
    for &rate in rate_grid {
        let mut cell_cfg = cfg.clone();
        cell_cfg.initial_rate = rate;
        for &seed in &cfg.seeds {
            let outcome = run_experiment(&cell_cfg, seed)
                .map(|report| report.avg_acc)
                .map_err(|e| e.to_string());
            cells.push(SweepCell { rate, seed, outcome });
        }
    }
    Ok(SweepResult { cells })
}

/// Capacity-ledger rows for the CLI: `(task_index, share)` per task.
pub fn capacity_table(initial_rate: f64, num_tasks: usize, plasticity: crate::negotiation::PlasticityMode) -> Result<Vec<(usize, f64)>> {
    let shares = crate::negotiation::simulate_capacity_with(initial_rate, num_tasks, plasticity)?;
    Ok(shares.into_iter().enumerate().collect())
}
