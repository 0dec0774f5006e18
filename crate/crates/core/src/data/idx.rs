//! IDX container (MNIST / Fashion-MNIST image and label files).
//!
//! Images: magic 0x00000803, then big-endian count/rows/cols and the raw
//! pixel bytes. Labels: magic 0x00000801, then count and label bytes. Files
//! are the uncompressed originals (gunzip the downloads first).

use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{LabeledDataset, Split};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(Error::Data {
                offset: self.offset as u64,
                message: format!(
                    "{}: truncated reading {what} ({} bytes left, {n} needed)",
                    self.path.display(),
                    self.bytes.len() - self.offset
                ),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn read_u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Loads an IDX image/label file pair into a normalized dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<LabeledDataset> {
    let image_bytes = std::fs::read(images_path)?;
    let label_bytes = std::fs::read(labels_path)?;

    let mut img = Cursor {
        bytes: &image_bytes,
        offset: 0,
        path: images_path,
    };
    let magic = img.read_u32("image magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Data {
            offset: 0,
            message: format!(
                "{}: bad image magic {magic:#010x} (expected {IMAGES_MAGIC:#010x})",
                images_path.display()
            ),
        });
    }
    let count = img.read_u32("image count")? as usize;
    let rows = img.read_u32("row count")? as usize;
    let cols = img.read_u32("column count")? as usize;
    let pixels = img.take(count * rows * cols, "pixel data")?;
    if img.offset != image_bytes.len() {
        return Err(Error::Data {
            offset: img.offset as u64,
            message: format!(
                "{}: {} trailing bytes after pixel data",
                images_path.display(),
                image_bytes.len() - img.offset
            ),
        });
    }

    let mut lab = Cursor {
        bytes: &label_bytes,
        offset: 0,
        path: labels_path,
    };
    let magic = lab.read_u32("label magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Data {
            offset: 0,
            message: format!(
                "{}: bad label magic {magic:#010x} (expected {LABELS_MAGIC:#010x})",
                labels_path.display()
            ),
        });
    }
    let label_count = lab.read_u32("label count")? as usize;
    if label_count != count {
        return Err(Error::Data {
            offset: 4,
            message: format!(
                "{} labels for {count} images",
                label_count
            ),
        });
    }
    let raw_labels = lab.take(label_count, "label data")?;

    let data: Vec<f64> = pixels.iter().map(|&b| f64::from(b) / 255.0).collect();
    let images = Tensor::from_vec(&[count, 1, rows, cols], data)?;
    let labels: Vec<usize> = raw_labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    LabeledDataset::new(images, labels, split, num_classes)
}
