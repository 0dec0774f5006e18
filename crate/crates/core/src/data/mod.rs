//! Dataset ingestion, class-incremental task splitting and the synthetic
//! test corpus.

mod cifar;
mod idx;

pub use cifar::{load_cifar, CifarVariant};
pub use idx::load_idx;

use crate::error::{Error, Result};
use crate::net::Dims;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Images with integer labels; pixel values are normalized to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    /// Shape `(count, channels, height, width)`.
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub split: Split,
    pub num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        split: Split,
        num_classes: usize,
    ) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::Shape(format!(
                "dataset images must be (count, channels, h, w), got {:?}",
                images.shape()
            )));
        }
        if images.batch_len() != labels.len() {
            return Err(Error::Data {
                offset: 0,
                message: format!(
                    "{} images but {} labels",
                    images.batch_len(),
                    labels.len()
                ),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Data {
                offset: 0,
                message: format!("label {bad} outside declared range 0..{num_classes}"),
            });
        }
        Ok(LabeledDataset {
            images,
            labels,
            split,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_dims(&self) -> Dims {
        let s = self.images.shape();
        Dims::image(s[1], s[2], s[3])
    }

    /// Assembles the images at `indices` into one batch tensor.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let row = self.images.row_len();
        let mut shape = self.images.shape().to_vec();
        shape[0] = indices.len();
        let mut data = Vec::with_capacity(indices.len() * row);
        for &i in indices {
            data.extend_from_slice(self.images.row(i));
        }
        Tensor::from_vec(&shape, data).expect("gather shape is consistent")
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }
}

/// One task: a class group plus the train/test sample indices that carry it.
#[derive(Debug, Clone)]
pub struct TaskSlice {
    pub classes: Vec<usize>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// An ordered sequence of disjoint-class tasks over one train/test pair.
#[derive(Debug)]
pub struct TaskSequence {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub tasks: Vec<TaskSlice>,
}

impl TaskSequence {
    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }
}

/// Partitions both splits into `num_tasks` contiguous class blocks (over
/// `class_order`, ascending labels by default).
pub fn split_tasks(
    train: LabeledDataset,
    test: LabeledDataset,
    num_tasks: usize,
    class_order: Option<&[usize]>,
) -> Result<TaskSequence> {
    if train.num_classes != test.num_classes {
        return Err(Error::Config(format!(
            "train has {} classes but test has {}",
            train.num_classes, test.num_classes
        )));
    }
    let classes = train.num_classes;
    if num_tasks == 0 || !classes.is_multiple_of(num_tasks) {
        return Err(Error::Config(format!(
            "{classes} classes cannot be split into {num_tasks} equal tasks"
        )));
    }
    let default_order: Vec<usize> = (0..classes).collect();
    let order = class_order.unwrap_or(&default_order);
    {
        let mut check = order.to_vec();
        check.sort_unstable();
        if check != default_order {
            return Err(Error::Config(
                "class order must be a permutation of all class labels".into(),
            ));
        }
    }

    let per_task = classes / num_tasks;
    let mut class_to_task = vec![0usize; classes];
    let mut tasks: Vec<TaskSlice> = (0..num_tasks)
        .map(|k| {
            let group = order[k * per_task..(k + 1) * per_task].to_vec();
            for &c in &group {
                class_to_task[c] = k;
            }
            TaskSlice {
                classes: group,
                train_indices: Vec::new(),
                test_indices: Vec::new(),
            }
        })
        .collect();

    for (i, &label) in train.labels.iter().enumerate() {
        tasks[class_to_task[label]].train_indices.push(i);
    }
    for (i, &label) in test.labels.iter().enumerate() {
        tasks[class_to_task[label]].test_indices.push(i);
    }

    Ok(TaskSequence { train, test, tasks })
}

/// Seeded Gaussian-blob images (1x8x8), linearly separable by class mean.
///
/// Class means depend only on the class label (an internal salt), so two
/// synthetic datasets drawn with different seeds share means and form a
/// matching train/test pair; the seed drives the per-sample noise.
pub fn synthetic_dataset(num_classes: usize, per_class: usize, seed: u64) -> LabeledDataset {
    assert!(num_classes > 0 && per_class > 0, "arguments must be positive");
    const SIDE: usize = 8;
    let means: Vec<Vec<f64>> = (0..num_classes).map(|c| class_mean(c, SIDE)).collect();

    let mut rng = Rng::new(seed);
    let count = num_classes * per_class;
    let mut data = Vec::with_capacity(count * SIDE * SIDE);
    let mut labels = Vec::with_capacity(count);
    for (c, mean) in means.iter().enumerate() {
        for _ in 0..per_class {
            for &mu in mean {
                data.push((mu + rng.normal(0.0, 0.05)).clamp(0.0, 1.0));
            }
            labels.push(c);
        }
    }
    let images = Tensor::from_vec(&[count, 1, SIDE, SIDE], data).expect("consistent shape");
    LabeledDataset::new(images, labels, Split::Train, num_classes).expect("valid synthetic data")
}

fn class_mean(class: usize, side: usize) -> Vec<f64> {
    let mut rng = Rng::new(0x5eed_ba5e ^ ((class as u64 + 1).wrapping_mul(0x9e37_79b9)));
    (0..side * side).map(|_| rng.uniform(0.1, 0.9)).collect()
}
