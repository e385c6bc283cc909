//! Datasets: IDX loading, synthetic transfer tasks and minibatch plans.

mod batch;
pub mod idx;
mod synthetic;

pub use batch::BatchPlan;
pub use idx::{load_idx, write_idx};
pub use synthetic::{
    synthetic_transfer_pair, synthetic_transfer_task, SyntheticParams, SyntheticTransfer,
};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::Tensor;

/// Labelled examples. `inputs` has shape `[n, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        inputs: Tensor,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        if inputs.shape()[0] != labels.len() {
            return Err(Error::domain(format!(
                "{} inputs but {} labels",
                inputs.shape()[0],
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::domain(format!(
                "label {y} not below class count {class_count}"
            )));
        }
        Ok(Self {
            name: name.into(),
            inputs,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-example input shape.
    pub fn example_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    pub fn example_len(&self) -> usize {
        self.example_shape().iter().product()
    }

    pub fn example(&self, i: usize) -> &[f64] {
        let d = self.example_len();
        &self.inputs.data()[i * d..(i + 1) * d]
    }

    /// Gathers the given examples into a batch tensor and label vector.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.example_len();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.example(i));
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.example_shape());
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (
            Tensor::new(shape, data).expect("gathered batch is non-empty"),
            labels,
        )
    }

    /// The first `n` examples (or all, if fewer).
    pub fn take(&self, n: usize) -> Dataset {
        if n >= self.len() {
            return self.clone();
        }
        let (inputs, labels) = self.gather(&(0..n).collect::<Vec<_>>());
        Dataset {
            name: self.name.clone(),
            inputs,
            labels,
            class_count: self.class_count,
        }
    }

    pub fn with_class_count(mut self, class_count: usize) -> Result<Self> {
        if let Some(&y) = self.labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::domain(format!(
                "label {y} not below class count {class_count}"
            )));
        }
        self.class_count = class_count;
        Ok(self)
    }
}

/// File names inside a dataset directory, following the MNIST layout.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn paths(dir: &Path, images: &str, labels: &str) -> (PathBuf, PathBuf) {
    (dir.join(images), dir.join(labels))
}

pub fn load_train(dir: &Path) -> Result<Dataset> {
    let (i, l) = paths(dir, TRAIN_IMAGES, TRAIN_LABELS);
    load_idx(&i, &l)
}

pub fn load_test(dir: &Path) -> Result<Dataset> {
    let (i, l) = paths(dir, TEST_IMAGES, TEST_LABELS);
    load_idx(&i, &l)
}

pub fn write_split(dir: &Path, train: &Dataset, test: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (i, l) = paths(dir, TRAIN_IMAGES, TRAIN_LABELS);
    write_idx(train, &i, &l)?;
    let (i, l) = paths(dir, TEST_IMAGES, TEST_LABELS);
    write_idx(test, &i, &l)
}
