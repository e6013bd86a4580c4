use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PreparedDataset;
use crate::numerics::Matrix;

/// Endless stream of column-index batches. Each epoch visits every column
/// once; with `shuffle` the order is redrawn from the seeded generator at
/// the start of every epoch.
#[derive(Debug, Clone)]
pub struct BatchOrder {
    order: Vec<usize>,
    batch_size: usize,
    cursor: usize,
    shuffle: bool,
    rng: ChaCha8Rng,
}

impl BatchOrder {
    pub fn new(len: usize, batch_size: usize, seed: u64, shuffle: bool) -> Self {
        let mut this = Self {
            order: (0..len).collect(),
            batch_size: batch_size.max(1),
            cursor: 0,
            shuffle,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        this.reshuffle();
        this
    }

    fn reshuffle(&mut self) {
        if self.shuffle {
            self.order.shuffle(&mut self.rng);
        }
        self.cursor = 0;
    }

    /// Next batch; the last batch of an epoch may be short.
    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor >= self.order.len() {
            self.reshuffle();
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let batch = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    /// All batches of the next epoch.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        if self.cursor != 0 {
            self.reshuffle();
        }
        let mut out = Vec::new();
        while self.cursor < self.order.len() {
            out.push(self.next_batch());
        }
        // leave the cursor at the end so the next call reshuffles
        out
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

/// One epoch of `(x_block, y_block)` column slices.
pub fn batch_iterator(
    prepared: &PreparedDataset,
    batch_size: usize,
    seed: u64,
    shuffle: bool,
) -> impl Iterator<Item = (Matrix, Matrix)> + '_ {
    let batches = BatchOrder::new(prepared.len(), batch_size, seed, shuffle).epoch();
    batches.into_iter().map(move |cols| {
        (
            prepared.x_block.select_columns(&cols),
            prepared.y_block.select_columns(&cols),
        )
    })
}
