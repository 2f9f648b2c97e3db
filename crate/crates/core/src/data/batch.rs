use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, SequenceSample};

/// Shuffled mini-batches over one epoch; the final batch may be short.
#[derive(Debug)]
pub struct Batches<'a> {
    samples: &'a [SequenceSample],
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

/// Shuffles `samples` with a generator seeded by `seed` and yields batches
/// of `batch_size` in that order.
pub fn batches(
    samples: &[SequenceSample],
    batch_size: usize,
    seed: u64,
) -> Result<Batches<'_>, DataError> {
    if batch_size == 0 {
        return Err(DataError::InvalidBatchSize);
    }
    if samples.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Batches {
        samples,
        order,
        batch_size,
        pos: 0,
    })
}

impl<'a> Iterator for Batches<'a> {
    type Item = Vec<&'a SequenceSample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let batch = self.order[self.pos..end]
            .iter()
            .map(|&i| &self.samples[i])
            .collect();
        self.pos = end;
        Some(batch)
    }
}
