//! Datasets, code databases and checkpoints.

mod binio;
mod checkpoint;
mod cifar;
mod codes;
mod idx;
mod synthetic;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use cifar::{parse_cifar10, read_cifar10};
pub use codes::{load_codes, save_codes, CodeDatabase};
pub use idx::{parse_idx, read_idx, read_idx_range, read_mnist, MnistSplit};
pub use synthetic::{gen_synthetic, SyntheticBlobs, SyntheticSpec};

pub(crate) use binio::{ByteReader, ByteWriter};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Query,
}

/// Images scaled to `[0, 1]` with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T> {
    /// `n x channels x height x width`
    images: Tensor<T>,
    labels: Vec<u32>,
    classes: usize,
    split: Split,
}

impl<T: Scalar> LabeledDataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<u32>, classes: usize, split: Split) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::dim(format!(
                "images must be n x c x h x w, got {:?}",
                images.shape()
            )));
        }
        if images.rows() != labels.len() {
            return Err(Error::dim(format!(
                "{} images but {} labels",
                images.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::config(format!(
                "label {bad} not below declared class count {classes}"
            )));
        }
        Ok(LabeledDataset {
            images,
            labels,
            classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor<T> {
        &self.images
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// `(channels, height, width)` of each image.
    pub fn image_dims(&self) -> (usize, usize, usize) {
        let s = self.images.shape();
        (s[1], s[2], s[3])
    }

    /// Gathers the given samples into a `batch x c x h x w` array.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let (c, h, w) = self.image_dims();
        let mut data = Vec::with_capacity(indices.len() * c * h * w);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Bounds {
                    index: i,
                    len: self.len(),
                });
            }
            data.extend_from_slice(self.images.row(i));
        }
        Tensor::from_vec(vec![indices.len(), c, h, w], data)
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<u32> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Contiguous sub-range `[start, start + len)`, clipped to the dataset.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        let start = start.min(self.len());
        let end = start.saturating_add(len).min(self.len());
        let idx: Vec<usize> = (start..end).collect();
        LabeledDataset {
            images: self.batch(&idx).expect("indices in range"),
            labels: self.batch_labels(&idx),
            classes: self.classes,
            split: self.split,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }
}
