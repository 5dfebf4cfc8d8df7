use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Active-fraction class boundaries `t_0 .. t_17`.
pub const BIN_BOUNDARIES: [f64; 18] = [
    0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.075, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
];

/// Class `i` (1-based) holds `t_{i-1} <= f_a < t_i`; the top class also
/// holds `f_a = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RebalancingBins {
    boundaries: Vec<f64>,
}

impl Default for RebalancingBins {
    fn default() -> Self {
        RebalancingBins {
            boundaries: BIN_BOUNDARIES.to_vec(),
        }
    }
}

impl RebalancingBins {
    pub fn new(boundaries: Vec<f64>) -> Result<Self> {
        if boundaries.len() < 2 || boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidValue("bin boundaries must be strictly increasing".into()));
        }
        Ok(RebalancingBins { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn classes(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// 1-based class of `f_a`. Values outside the boundary range are clamped
    /// into the first or last class.
    pub fn class_of(&self, f_a: f64) -> usize {
        let upper = &self.boundaries[1..];
        upper.partition_point(|&t| t <= f_a).min(self.classes() - 1) + 1
    }
}

/// Resamples a stream of items so every class present in the source is
/// emitted with equal probability.
///
/// Each output draws a class uniformly from the classes seen so far, then
/// pulls from the source (queueing other classes' items, up to `capacity`
/// per class) until that class's queue is non-empty. A class not seen in
/// `patience` pulls becomes dormant until it shows up again. Once the
/// source is exhausted the queues are drained, then the stream ends.
pub struct RebalancedStream<I: Iterator, F> {
    source: I,
    classify: F,
    queues: Vec<VecDeque<I::Item>>,
    present: Vec<bool>,
    capacity: usize,
    patience: usize,
    exhausted: bool,
    rng: ChaCha8Rng,
}

impl<I, F> RebalancedStream<I, F>
where
    I: Iterator,
    F: FnMut(&I::Item) -> usize,
{
    /// `classify` maps an item to a 1-based class in `1..=classes`.
    pub fn new(source: I, classes: usize, classify: F, seed: u64) -> Self {
        RebalancedStream {
            source,
            classify,
            queues: (0..classes).map(|_| VecDeque::new()).collect(),
            present: vec![false; classes],
            capacity: 64,
            patience: 100_000,
            exhausted: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn with_capacity(mut self, capacity: usize) -> Self {
        self.capacity = capacity.max(1);
        self
    }

    pub fn with_patience(mut self, patience: usize) -> Self {
        self.patience = patience.max(1);
        self
    }

    /// Classes currently eligible for output (0-based).
    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.present.len()).filter(|&c| self.present[c]).collect()
    }

    /// Pulls one item from the source into its queue; false when exhausted.
    fn pull(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        match self.source.next() {
            None => {
                self.exhausted = true;
                false
            }
            Some(item) => {
                let c = (self.classify)(&item).clamp(1, self.queues.len()) - 1;
                self.present[c] = true;
                if self.queues[c].len() < self.capacity {
                    self.queues[c].push_back(item);
                }
                true
            }
        }
    }

    fn choose(&mut self, eligible: &[usize]) -> usize {
        eligible[self.rng.gen_range(0..eligible.len())]
    }
}

impl<I, F> Iterator for RebalancedStream<I, F>
where
    I: Iterator,
    F: FnMut(&I::Item) -> usize,
{
    type Item = I::Item;

    fn next(&mut self) -> Option<I::Item> {
        loop {
            if self.exhausted {
                let eligible: Vec<usize> = (0..self.queues.len()).filter(|&c| !self.queues[c].is_empty()).collect();
                if eligible.is_empty() {
                    return None;
                }
                let c = self.choose(&eligible);
                return self.queues[c].pop_front();
            }
            let mut present = self.present_classes();
            if present.is_empty() {
                if !self.pull() {
                    continue;
                }
                present = self.present_classes();
            }
            let c = self.choose(&present);
            let mut pulls = 0;
            while self.queues[c].is_empty() {
                if pulls == self.patience || !self.pull() {
                    break;
                }
                pulls += 1;
            }
            if let Some(item) = self.queues[c].pop_front() {
                return Some(item);
            }
            if !self.exhausted {
                log::debug!("class {} dormant after {pulls} pulls", c + 1);
                self.present[c] = false;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_lookup() {
        let b = RebalancingBins::default();
        assert_eq!(b.classes(), 17);
        assert_eq!(b.class_of(0.0), 1);
        assert_eq!(b.class_of(0.05), 6);
        assert_eq!(b.class_of(0.0599), 6);
        assert_eq!(b.class_of(0.06), 7);
        assert_eq!(b.class_of(0.95), 17);
        assert_eq!(b.class_of(1.0), 17);
        assert_eq!(b.class_of(0.5), 13);
    }

    #[test]
    fn boundaries_must_increase() {
        assert!(RebalancingBins::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert_eq!(RebalancingBins::new(vec![0.0, 0.5, 1.0]).unwrap().classes(), 2);
    }

    #[test]
    fn single_class_source_passes_through() {
        let out: Vec<u32> = RebalancedStream::new(0..50u32, 17, |_| 9, 1).collect();
        assert_eq!(out, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn two_class_ninety_ten_is_balanced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let source = std::iter::repeat_with(move || if rng.gen_bool(0.9) { 1usize } else { 2 });
        let out: Vec<usize> = RebalancedStream::new(source, 17, |&c| c, 5).take(10_000).collect();
        let ones = out.iter().filter(|&&c| c == 1).count() as f64;
        // Binomial(10000, 1/2): sd = 50.
        assert!((ones - 5000.0).abs() < 150.0, "{ones}");
    }

    #[test]
    fn deterministic_under_seed() {
        let make = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let source = std::iter::repeat_with(move || rng.gen_range(0..100u32));
            RebalancedStream::new(source, 17, |&v| (v as usize % 17) + 1, seed)
                .take(500)
                .collect::<Vec<_>>()
        };
        assert_eq!(make(1), make(1));
        assert_ne!(make(1), make(2));
    }

    #[test]
    fn finite_source_drains_then_ends() {
        let out: Vec<u32> = RebalancedStream::new(0..20u32, 17, |&v| (v % 3) as usize + 1, 4)
            .with_capacity(100)
            .collect();
        let mut sorted = out.clone();
        sorted.sort();
        assert_eq!(sorted, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn vanished_class_goes_dormant() {
        // Class 2 appears once at the start and never again.
        let source = std::iter::once(2usize).chain(std::iter::repeat(1));
        let out: Vec<usize> = RebalancedStream::new(source, 17, |&c| c, 0)
            .with_patience(50)
            .take(100)
            .collect();
        assert_eq!(out.iter().filter(|&&c| c == 2).count(), 1);
        assert_eq!(out.len(), 100);
    }
}
