use rand::seq::SliceRandom;

use crate::corpus::segment::TrainingExample;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Packs examples into token-budgeted batches, reshuffling every epoch.
///
/// A batch takes examples in epoch order until the next one would exceed the
/// budget. Batches never straddle an epoch boundary, so every example is
/// emitted exactly once per epoch.
#[derive(Debug, Clone)]
pub struct Batcher {
    lengths: Vec<usize>,
    tokens_per_batch: usize,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
    epoch: usize,
}

impl Batcher {
    pub fn new(examples: &[TrainingExample], tokens_per_batch: usize, rng: Rng) -> Result<Self> {
        Self::from_lengths(examples.iter().map(TrainingExample::len).collect(), tokens_per_batch, rng)
    }

    pub fn from_lengths(lengths: Vec<usize>, tokens_per_batch: usize, rng: Rng) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::EmptyInput("batcher examples"));
        }
        if let Some(&len) = lengths.iter().find(|&&l| l > tokens_per_batch) {
            return Err(Error::ExampleExceedsBudget { len, budget: tokens_per_batch });
        }
        let mut b = Batcher { lengths, tokens_per_batch, rng, order: Vec::new(), cursor: 0, epoch: 0 };
        b.reshuffle();
        Ok(b)
    }

    fn reshuffle(&mut self) {
        self.order = (0..self.lengths.len()).collect();
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    /// Number of fully started epochs (0-based index of the current one).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Indices of the next batch's examples.
    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor == self.order.len() {
            self.epoch += 1;
            self.reshuffle();
        }
        let mut used = 0;
        let mut batch = Vec::new();
        while self.cursor < self.order.len() {
            let idx = self.order[self.cursor];
            if used + self.lengths[idx] > self.tokens_per_batch {
                break;
            }
            used += self.lengths[idx];
            batch.push(idx);
            self.cursor += 1;
        }
        batch
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn full_examples_pack_two_per_batch() {
        let mut b = Batcher::from_lengths(vec![2048; 6], 4096, seeded(0)).unwrap();
        for _ in 0..3 {
            assert_eq!(b.next_batch().len(), 2);
        }
        assert_eq!(b.epoch(), 0);
        b.next_batch();
        assert_eq!(b.epoch(), 1);
    }

    #[test]
    fn epoch_covers_every_example_once() {
        let lengths: Vec<usize> = (1..=37).map(|i| (i * 97) % 2048 + 1).collect();
        let mut b = Batcher::from_lengths(lengths.clone(), 4096, seeded(5)).unwrap();
        let mut seen = Vec::new();
        while seen.len() < lengths.len() {
            let batch = b.next_batch();
            assert!(batch.iter().map(|&i| lengths[i]).sum::<usize>() <= 4096);
            seen.extend(batch);
        }
        assert_eq!(seen.len(), lengths.len());
        seen.sort();
        assert_eq!(seen, (0..lengths.len()).collect::<Vec<_>>());
        assert_eq!(b.epoch(), 0);
    }

    #[test]
    fn same_seed_same_order() {
        let lengths = vec![100; 50];
        let run = |seed| {
            let mut b = Batcher::from_lengths(lengths.clone(), 1000, seeded(seed)).unwrap();
            (0..12).map(|_| b.next_batch()).collect::<Vec<_>>()
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
    }

    #[test]
    fn oversized_example_rejected() {
        assert!(matches!(
            Batcher::from_lengths(vec![10, 5000], 4096, seeded(0)),
            Err(Error::ExampleExceedsBudget { len: 5000, .. })
        ));
    }
}
