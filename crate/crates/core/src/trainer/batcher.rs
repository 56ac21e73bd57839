use crate::error::{Error, Result};
use crate::rng::Rng;

/// Mini-batch sampler that walks a cursor over `0..n`, advancing it by
/// `1 + U{0..=skip_max}` after every accepted sample and wrapping modulo
/// `n`. An index already in the current batch is stepped over, so every
/// batch holds distinct indices. With `skip_max = 0` this yields
/// contiguous sequential batches.
#[derive(Debug, Clone)]
pub struct RandomSkipBatcher {
    n: usize,
    batch_size: usize,
    skip_max: usize,
    cursor: usize,
    taken: Vec<bool>,
    rng: Rng,
}

impl RandomSkipBatcher {
    pub fn new(n: usize, batch_size: usize, skip_max: usize, rng: Rng) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if batch_size > n {
            return Err(Error::config(format!(
                "batch size {batch_size} exceeds dataset size {n}"
            )));
        }
        Ok(RandomSkipBatcher {
            n,
            batch_size,
            skip_max,
            cursor: 0,
            taken: vec![false; n],
            rng,
        })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = Vec::with_capacity(self.batch_size);
        for _ in 0..self.batch_size {
            while self.taken[self.cursor] {
                self.cursor = (self.cursor + 1) % self.n;
            }
            self.taken[self.cursor] = true;
            batch.push(self.cursor);
            let step = 1 + self.rng.uniform_inclusive(self.skip_max);
            self.cursor = (self.cursor + step) % self.n;
        }
        for &i in &batch {
            self.taken[i] = false;
        }
        batch
    }
}

impl Iterator for RandomSkipBatcher {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        Some(self.next_batch())
    }
}

pub fn random_skip_batcher(
    n: usize,
    batch_size: usize,
    skip_max: usize,
    rng: Rng,
) -> Result<RandomSkipBatcher> {
    RandomSkipBatcher::new(n, batch_size, skip_max, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_skip_is_sequential() {
        let mut b = random_skip_batcher(7, 3, 0, Rng::new(1)).unwrap();
        assert_eq!(b.next_batch(), vec![0, 1, 2]);
        assert_eq!(b.next_batch(), vec![3, 4, 5]);
        assert_eq!(b.next_batch(), vec![6, 0, 1]);
    }

    #[test]
    fn batches_are_distinct_and_in_range() {
        let b = random_skip_batcher(10, 10, 200, Rng::new(3)).unwrap();
        for batch in b.take(200) {
            let mut s = batch.clone();
            s.sort_unstable();
            assert_eq!(s, (0..10).collect::<Vec<_>>());
        }
        let b = random_skip_batcher(50, 7, 13, Rng::new(4)).unwrap();
        for batch in b.take(500) {
            let mut s = batch.clone();
            s.sort_unstable();
            s.dedup();
            assert_eq!(s.len(), 7);
            assert!(s.iter().all(|&i| i < 50));
        }
    }

    #[test]
    fn deterministic_and_covering() {
        let a: Vec<_> = random_skip_batcher(1000, 100, 200, Rng::new(9))
            .unwrap()
            .take(50)
            .collect();
        let b: Vec<_> = random_skip_batcher(1000, 100, 200, Rng::new(9))
            .unwrap()
            .take(50)
            .collect();
        assert_eq!(a, b);
        let mut seen = vec![false; 1000];
        for batch in random_skip_batcher(1000, 100, 200, Rng::new(9))
            .unwrap()
            .take(10_000)
        {
            for i in batch {
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn oversized_batch_rejected() {
        assert!(random_skip_batcher(3, 4, 0, Rng::new(0)).is_err());
        assert!(random_skip_batcher(3, 0, 0, Rng::new(0)).is_err());
    }
}
