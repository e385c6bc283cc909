use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// How a dataset is cut into minibatches each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub seed: u64,
    pub batch_size: usize,
    pub shuffle: bool,
}

impl BatchPlan {
    /// Index order for `epoch`: a permutation of `0..n` fixed by
    /// `(seed, epoch)`, cut into consecutive batches. The last batch may be
    /// short.
    pub fn order(&self, n: usize, epoch: usize) -> Result<Vec<usize>> {
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        if self.shuffle {
            let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
            rng.set_stream(epoch as u64);
            idx.shuffle(&mut rng);
        }
        Ok(idx)
    }

    pub fn batches(&self, n: usize, epoch: usize) -> Result<Vec<Vec<usize>>> {
        let idx = self.order(n, epoch)?;
        Ok(idx.chunks(self.batch_size).map(<[usize]>::to_vec).collect())
    }
}
