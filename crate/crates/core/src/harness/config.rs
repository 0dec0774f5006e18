//! Experiment configuration: per-dataset model presets, defaults, and the
//! flat key-value config format with override support.

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::metrics::DistanceKind;
use crate::negotiation::{PlasticityMode, DEFAULT_EPSILON};
use crate::net::{Dims, LayerSpec, SigmoidCfg};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetId {
    Mnist,
    FashionMnist,
    Cifar10,
    Cifar100,
    Synthetic,
}

impl DatasetId {
    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "mnist" => Ok(DatasetId::Mnist),
            "fashion-mnist" | "fashion_mnist" | "fashion" => Ok(DatasetId::FashionMnist),
            "cifar10" | "cifar-10" => Ok(DatasetId::Cifar10),
            "cifar100" | "cifar-100" => Ok(DatasetId::Cifar100),
            "synthetic" => Ok(DatasetId::Synthetic),
            other => Err(Error::Config(format!("unknown dataset '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DatasetId::Mnist => "mnist",
            DatasetId::FashionMnist => "fashion-mnist",
            DatasetId::Cifar10 => "cifar10",
            DatasetId::Cifar100 => "cifar100",
            DatasetId::Synthetic => "synthetic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerChoice {
    Adam,
    SgdMomentum,
}

/// The convolutional trunk shared by the negotiated model and the one-hot
/// baseline; the output head is appended per run.
#[derive(Debug, Clone)]
pub struct ModelPreset {
    pub input: Dims,
    pub trunk: Vec<LayerSpec>,
    /// Walsh vector size this preset was sized for.
    pub default_walsh: usize,
    /// Total parameter count of the negotiated model at `default_walsh`.
    pub expected_params: usize,
}

/// Architecture preset for a dataset (trunk plus sizing).
pub fn model_preset(dataset: DatasetId) -> ModelPreset {
    match dataset {
        DatasetId::Mnist => ModelPreset {
            input: Dims::image(1, 28, 28),
            trunk: vec![
                LayerSpec::conv2d(32, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::conv2d(64, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::Flatten,
            ],
            default_walsh: 16,
            expected_params: 44_432,
        },
        DatasetId::FashionMnist => ModelPreset {
            input: Dims::image(1, 28, 28),
            trunk: vec![
                LayerSpec::conv2d(64, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::Flatten,
            ],
            default_walsh: 64,
            expected_params: 692_928,
        },
        DatasetId::Cifar10 => ModelPreset {
            input: Dims::image(3, 32, 32),
            trunk: vec![
                LayerSpec::conv2d_same(62, 3),
                LayerSpec::relu(),
                LayerSpec::conv2d_same(62, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::conv2d_same(102, 3),
                LayerSpec::relu(),
                LayerSpec::conv2d_same(102, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::conv2d_same(128, 3),
                LayerSpec::relu(),
                LayerSpec::conv2d_same(128, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::Flatten,
            ],
            default_walsh: 64,
            expected_params: 583_502,
        },
        DatasetId::Cifar100 => ModelPreset {
            input: Dims::image(3, 32, 32),
            trunk: vec![
                LayerSpec::conv2d_same(128, 3),
                LayerSpec::relu(),
                LayerSpec::conv2d_same(128, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::conv2d_same(128, 3),
                LayerSpec::relu(),
                LayerSpec::conv2d_same(128, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::conv2d_same(256, 3),
                LayerSpec::relu(),
                LayerSpec::conv2d_same(256, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::Flatten,
            ],
            default_walsh: 128,
            expected_params: 1_856_000,
        },
        DatasetId::Synthetic => ModelPreset {
            input: Dims::image(1, 8, 8),
            trunk: vec![
                LayerSpec::conv2d(8, 3),
                LayerSpec::relu(),
                LayerSpec::maxpool2(),
                LayerSpec::Flatten,
            ],
            default_walsh: 8,
            expected_params: 664,
        },
    }
}

/// Layer specs of the negotiated model: trunk, dense head sized to the
/// Walsh order, softened sigmoid output.
pub fn negotiated_specs(
    preset: &ModelPreset,
    walsh_order: usize,
    sigmoid: SigmoidCfg,
) -> Vec<LayerSpec> {
    let mut specs = preset.trunk.clone();
    specs.push(LayerSpec::dense(walsh_order));
    specs.push(LayerSpec::custom_sigmoid(sigmoid));
    specs
}

/// Layer specs of the one-hot baseline: same trunk, logit head of one unit
/// per class (trained with softmax cross-entropy).
pub fn baseline_specs(preset: &ModelPreset, num_classes: usize) -> Vec<LayerSpec> {
    let mut specs = preset.trunk.clone();
    specs.push(LayerSpec::dense(num_classes));
    specs
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub dataset: DatasetId,
    pub data_dir: PathBuf,
    pub num_tasks: usize,
    pub walsh_size: usize,
    /// Initial negotiation rate. 0 disables negotiation (pure code targets).
    pub initial_rate: f64,
    pub plasticity: PlasticityMode,
    pub sigmoid: SigmoidCfg,
    pub epsilon: f64,
    pub epochs_per_task: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerChoice,
    pub learning_rate: f64,
    pub momentum: f64,
    pub distance: DistanceKind,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub synthetic_classes: usize,
    pub synthetic_per_class: usize,
    /// Seed for synthetic data generation (kept apart from run seeds so the
    /// corpus is fixed across a seed sweep, like a real dataset).
    pub data_seed: u64,
}

impl ExperimentConfig {
    /// Recommended defaults for a dataset.
    pub fn preset(dataset: DatasetId) -> Self {
        let base = ExperimentConfig {
            dataset,
            data_dir: PathBuf::from("data"),
            num_tasks: 5,
            walsh_size: model_preset(dataset).default_walsh,
            initial_rate: 0.8,
            plasticity: PlasticityMode::Optimal,
            sigmoid: SigmoidCfg::new(true, 2.0).expect("valid default"),
            epsilon: DEFAULT_EPSILON,
            epochs_per_task: 2,
            batch_size: 64,
            optimizer: OptimizerChoice::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            distance: DistanceKind::RepresentationBce,
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from(format!("runs/{}", dataset.name())),
            synthetic_classes: 4,
            synthetic_per_class: 150,
            data_seed: 1234,
        };
        match dataset {
            DatasetId::Mnist => ExperimentConfig {
                epochs_per_task: 3,
                ..base
            },
            DatasetId::FashionMnist => ExperimentConfig {
                initial_rate: 0.6,
                epochs_per_task: 3,
                ..base
            },
            DatasetId::Cifar10 | DatasetId::Cifar100 => ExperimentConfig {
                initial_rate: 0.9,
                ..base
            },
            DatasetId::Synthetic => ExperimentConfig {
                num_tasks: 2,
                initial_rate: 0.5,
                epochs_per_task: 30,
                batch_size: 32,
                ..base
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.initial_rate >= 0.0 && self.initial_rate < 1.0) {
            return Err(Error::Config(format!(
                "initial rate must lie in [0, 1), got {}",
                self.initial_rate
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        if self.num_tasks == 0 {
            return Err(Error::Config("num_tasks must be positive".into()));
        }
        if self.epochs_per_task == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch size must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    /// Applies one `key = value` override.
    pub fn apply_key(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key}: cannot parse '{value}' as {what}"));
        match key {
            "dataset" => self.dataset = DatasetId::parse(value)?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "num_tasks" => self.num_tasks = value.parse().map_err(|_| bad("integer"))?,
            "walsh_size" => self.walsh_size = value.parse().map_err(|_| bad("integer"))?,
            "rate" | "initial_rate" => {
                self.initial_rate = value.parse().map_err(|_| bad("number"))?
            }
            "plasticity" => {
                self.plasticity = if value == "optimal" {
                    PlasticityMode::Optimal
                } else if let Some(rest) = value.strip_prefix("fixed:") {
                    PlasticityMode::Fixed(rest.parse().map_err(|_| bad("fixed:<number>"))?)
                } else {
                    return Err(Error::Config(format!(
                        "plasticity must be 'optimal' or 'fixed:<multiplier>', got '{value}'"
                    )));
                }
            }
            "softener" => {
                let on = value.parse().map_err(|_| bad("bool"))?;
                self.sigmoid = SigmoidCfg::new(on, self.sigmoid.coeff())?;
            }
            "softener_coeff" => {
                let coeff = value.parse().map_err(|_| bad("number"))?;
                self.sigmoid = SigmoidCfg::new(self.sigmoid.softener(), coeff)?;
            }
            "epsilon" => self.epsilon = value.parse().map_err(|_| bad("number"))?,
            "epochs_per_task" | "epochs" => {
                self.epochs_per_task = value.parse().map_err(|_| bad("integer"))?
            }
            "batch_size" => self.batch_size = value.parse().map_err(|_| bad("integer"))?,
            "optimizer" => {
                self.optimizer = match value {
                    "adam" => OptimizerChoice::Adam,
                    "sgd" | "sgd_momentum" => OptimizerChoice::SgdMomentum,
                    other => {
                        return Err(Error::Config(format!(
                            "optimizer must be 'adam' or 'sgd_momentum', got '{other}'"
                        )))
                    }
                }
            }
            "learning_rate" | "lr" => {
                self.learning_rate = value.parse().map_err(|_| bad("number"))?
            }
            "momentum" => self.momentum = value.parse().map_err(|_| bad("number"))?,
            "distance" => {
                self.distance = match value {
                    "bce" => DistanceKind::RepresentationBce,
                    "euclidean" => DistanceKind::Euclidean,
                    other => {
                        return Err(Error::Config(format!(
                            "distance must be 'bce' or 'euclidean', got '{other}'"
                        )))
                    }
                }
            }
            "seeds" => {
                let seeds: std::result::Result<Vec<u64>, _> =
                    value.split(',').map(|s| s.trim().parse()).collect();
                self.seeds = seeds.map_err(|_| bad("comma-separated integers"))?;
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "synthetic_classes" => {
                self.synthetic_classes = value.parse().map_err(|_| bad("integer"))?
            }
            "synthetic_per_class" => {
                self.synthetic_per_class = value.parse().map_err(|_| bad("integer"))?
            }
            "data_seed" => self.data_seed = value.parse().map_err(|_| bad("integer"))?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses a flat key-value config file. A `dataset` line, if present,
    /// first selects that dataset's defaults; the remaining keys override.
    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        let dataset = pairs
            .iter()
            .find(|(k, _)| k == "dataset")
            .map(|(_, v)| DatasetId::parse(v))
            .transpose()?
            .unwrap_or(DatasetId::Synthetic);
        let mut cfg = ExperimentConfig::preset(dataset);
        for (key, value) in &pairs {
            cfg.apply_key(key, value)?;
        }
        Ok(cfg)
    }

    /// Canonical key-value rendering; parsing it back reproduces the config.
    pub fn snapshot(&self) -> String {
        let plasticity = match self.plasticity {
            PlasticityMode::Optimal => "optimal".to_string(),
            PlasticityMode::Fixed(p) => format!("fixed:{p}"),
        };
        let optimizer = match self.optimizer {
            OptimizerChoice::Adam => "adam",
            OptimizerChoice::SgdMomentum => "sgd_momentum",
        };
        let distance = match self.distance {
            DistanceKind::RepresentationBce => "bce",
            DistanceKind::Euclidean => "euclidean",
        };
        let seeds: Vec<String> = self.seeds.iter().map(|s| s.to_string()).collect();
        format!(
            "dataset = {}\n\
             data_dir = {}\n\
             num_tasks = {}\n\
             walsh_size = {}\n\
             rate = {}\n\
             plasticity = {}\n\
             softener = {}\n\
             softener_coeff = {}\n\
             epsilon = {}\n\
             epochs_per_task = {}\n\
             batch_size = {}\n\
             optimizer = {}\n\
             learning_rate = {}\n\
             momentum = {}\n\
             distance = {}\n\
             seeds = {}\n\
             out_dir = {}\n\
             synthetic_classes = {}\n\
             synthetic_per_class = {}\n\
             data_seed = {}\n",
            self.dataset.name(),
            self.data_dir.display(),
            self.num_tasks,
            self.walsh_size,
            self.initial_rate,
            plasticity,
            self.sigmoid.softener(),
            self.sigmoid.coeff(),
            self.epsilon,
            self.epochs_per_task,
            self.batch_size,
            optimizer,
            self.learning_rate,
            self.momentum,
            distance,
            seeds.join(","),
            self.out_dir.display(),
            self.synthetic_classes,
            self.synthetic_per_class,
            self.data_seed,
        )
    }
}

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "config line {}: expected 'key = value', got '{raw}'",
                lineno + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
