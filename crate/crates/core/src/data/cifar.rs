//! CIFAR-10 / CIFAR-100 binary batch files.
//!
//! Every record is label byte(s) followed by 3072 pixel bytes (red, green,
//! blue planes of a 32x32 image). CIFAR-100 records carry a coarse label
//! byte first, which is skipped in favor of the fine label.

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

const PIXELS_PER_IMAGE: usize = 3 * 32 * 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    fn label_bytes(&self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    fn num_classes(&self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    fn files(&self, split: Split) -> Vec<&'static str> {
        match (self, split) {
            (CifarVariant::Cifar10, Split::Train) => vec![
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            (CifarVariant::Cifar10, Split::Test) => vec!["test_batch.bin"],
            (CifarVariant::Cifar100, Split::Train) => vec!["train.bin"],
            (CifarVariant::Cifar100, Split::Test) => vec!["test.bin"],
        }
    }
}

/// Loads one split of a CIFAR dataset from its standard binary batch files
/// in `dir`.
pub fn load_cifar(dir: &Path, variant: CifarVariant, split: Split) -> Result<LabeledDataset> {
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for name in variant.files(split) {
        let path = dir.join(name);
        let bytes = std::fs::read(&path)?;
        parse_batch(&bytes, variant, &path, &mut data, &mut labels)?;
    }
    let count = labels.len();
    let images = Tensor::from_vec(&[count, 3, 32, 32], data)?;
    LabeledDataset::new(images, labels, split, variant.num_classes())
}

fn parse_batch(
    bytes: &[u8],
    variant: CifarVariant,
    path: &Path,
    data: &mut Vec<f64>,
    labels: &mut Vec<usize>,
) -> Result<()> {
    let record = variant.label_bytes() + PIXELS_PER_IMAGE;
    if bytes.is_empty() || !bytes.len().is_multiple_of(record) {
        return Err(Error::Data {
            offset: (bytes.len() - bytes.len() % record) as u64,
            message: format!(
                "{}: file length {} is not a multiple of the {record}-byte record",
                path.display(),
                bytes.len()
            ),
        });
    }
    data.reserve(bytes.len() / record * PIXELS_PER_IMAGE);
    for chunk in bytes.chunks_exact(record) {
        // Fine label is the last label byte (the only one for CIFAR-10).
        let label = chunk[variant.label_bytes() - 1] as usize;
        if label >= variant.num_classes() {
            return Err(Error::Data {
                offset: (labels.len() * record) as u64,
                message: format!("{}: label {label} out of range", path.display()),
            });
        }
        labels.push(label);
        data.extend(
            chunk[variant.label_bytes()..]
                .iter()
                .map(|&b| f64::from(b) / 255.0),
        );
    }
    Ok(())
}
