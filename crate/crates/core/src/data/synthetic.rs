//! Gaussian-blob transfer tasks.
//!
//! Class means are drawn once per seed. The fine-tune task moves every mean
//! by `shift` along its own random unit direction and samples fresh noise.
//! Values are mapped through `0.5 + x / 8`, clamped to `[0, 1]` and rounded
//! to byte levels so the data survives an IDX round trip unchanged.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Tensor;

use super::Dataset;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticParams {
    pub seed: u64,
    pub n_pre: usize,
    pub n_fine: usize,
    /// Held-out examples generated for each task.
    pub n_test: usize,
    pub dim: usize,
    pub classes: usize,
    pub shift: f64,
    /// Per-coordinate noise standard deviation; class means have unit scale.
    pub noise: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 0,
            n_pre: 2000,
            n_fine: 500,
            n_test: 1000,
            dim: 16,
            classes: 5,
            shift: 0.5,
            noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTransfer {
    pub pretrain: Dataset,
    pub pretrain_test: Dataset,
    pub finetune: Dataset,
    pub finetune_test: Dataset,
}

// Independent streams so that changing one sample count leaves the other
// datasets untouched.
const STREAM_MEANS: u64 = 1;
const STREAM_SHIFTS: u64 = 2;
const STREAM_PRE: u64 = 3;
const STREAM_PRE_TEST: u64 = 4;
const STREAM_FINE: u64 = 5;
const STREAM_FINE_TEST: u64 = 6;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn quantise(x: f64) -> f64 {
    ((0.5 + x / 8.0).clamp(0.0, 1.0) * 255.0).round() / 255.0
}

fn sample(
    name: &str,
    means: &[Vec<f64>],
    n: usize,
    noise: f64,
    mut r: ChaCha8Rng,
) -> Result<Dataset> {
    let classes = means.len();
    let dim = means[0].len();
    // Balanced labels in shuffled order.
    let mut labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    labels.shuffle(&mut r);
    let mut data = Vec::with_capacity(n * dim);
    for &y in &labels {
        for &m in &means[y] {
            data.push(quantise(m + noise * normal(&mut r)));
        }
    }
    Dataset::new(
        name,
        Tensor::new(vec![n, 1, 1, dim], data)?,
        labels,
        classes,
    )
}

pub fn synthetic_transfer_task(p: &SyntheticParams) -> Result<SyntheticTransfer> {
    if p.dim == 0 {
        return Err(Error::config("synthetic dimension must be positive"));
    }
    if p.classes < 2 {
        return Err(Error::config("synthetic task needs at least 2 classes"));
    }
    for (what, n) in [
        ("n_pre", p.n_pre),
        ("n_fine", p.n_fine),
        ("n_test", p.n_test),
    ] {
        if n < p.classes {
            return Err(Error::config(format!(
                "{what} = {n} is below the class count {}",
                p.classes
            )));
        }
    }
    if !(p.shift.is_finite() && p.noise.is_finite() && p.noise >= 0.0) {
        return Err(Error::config(
            "shift must be finite and noise finite and non-negative",
        ));
    }

    let mut r = rng(p.seed, STREAM_MEANS);
    let means: Vec<Vec<f64>> = (0..p.classes)
        .map(|_| (0..p.dim).map(|_| normal(&mut r)).collect())
        .collect();
    let mut r = rng(p.seed, STREAM_SHIFTS);
    let shifted: Vec<Vec<f64>> = means
        .iter()
        .map(|m| {
            let u: Vec<f64> = (0..p.dim).map(|_| normal(&mut r)).collect();
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            m.iter()
                .zip(&u)
                .map(|(&mi, &ui)| {
                    if norm > 0.0 {
                        mi + p.shift * ui / norm
                    } else {
                        mi
                    }
                })
                .collect()
        })
        .collect();

    Ok(SyntheticTransfer {
        pretrain: sample(
            "pretrain",
            &means,
            p.n_pre,
            p.noise,
            rng(p.seed, STREAM_PRE),
        )?,
        pretrain_test: sample(
            "pretrain-test",
            &means,
            p.n_test,
            p.noise,
            rng(p.seed, STREAM_PRE_TEST),
        )?,
        finetune: sample(
            "finetune",
            &shifted,
            p.n_fine,
            p.noise,
            rng(p.seed, STREAM_FINE),
        )?,
        finetune_test: sample(
            "finetune-test",
            &shifted,
            p.n_test,
            p.noise,
            rng(p.seed, STREAM_FINE_TEST),
        )?,
    })
}

/// The pretrain and fine-tune training sets of [`synthetic_transfer_task`].
pub fn synthetic_transfer_pair(p: &SyntheticParams) -> Result<(Dataset, Dataset)> {
    let t = synthetic_transfer_task(p)?;
    Ok((t.pretrain, t.finetune))
}
