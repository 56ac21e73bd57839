//! Pairwise supervision derived from class-label consensus.
//!
//! The `n x n` matrix of pair labels is never materialised; entries are
//! computed on demand from the per-sample labels.

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Pair label: +1 similar, -1 dissimilar, 0 unsupervised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Similarity {
    Dissimilar,
    Unknown,
    Similar,
}

impl Similarity {
    pub fn value(self) -> i8 {
        match self {
            Similarity::Dissimilar => -1,
            Similarity::Unknown => 0,
            Similarity::Similar => 1,
        }
    }

    pub fn as_scalar<T: Scalar>(self) -> T {
        match self {
            Similarity::Dissimilar => -T::one(),
            Similarity::Unknown => T::zero(),
            Similarity::Similar => T::one(),
        }
    }

    pub fn from_labels(a: Option<u32>, b: Option<u32>) -> Self {
        match (a, b) {
            (Some(a), Some(b)) if a == b => Similarity::Similar,
            (Some(_), Some(_)) => Similarity::Dissimilar,
            _ => Similarity::Unknown,
        }
    }
}

/// A supervised pair inside a mini-batch. `i < j` are positions into the
/// batch, not dataset indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPair {
    pub i: usize,
    pub j: usize,
    pub y: Similarity,
}

#[derive(Debug, Clone)]
pub struct SimilarityOracle {
    labels: Vec<Option<u32>>,
}

impl SimilarityOracle {
    pub fn new(labels: Vec<Option<u32>>) -> Self {
        SimilarityOracle { labels }
    }

    pub fn from_known(labels: &[u32]) -> Self {
        Self::new(labels.iter().map(|&l| Some(l)).collect())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn label(&self, i: usize) -> Result<Option<u32>> {
        self.labels.get(i).copied().ok_or(Error::Bounds {
            index: i,
            len: self.labels.len(),
        })
    }

    pub fn y_of(&self, i: usize, j: usize) -> Result<Similarity> {
        Ok(Similarity::from_labels(self.label(i)?, self.label(j)?))
    }

    /// Every unordered pair of the batch exactly once, `i < j` by batch
    /// position.
    pub fn batch_pairs(&self, batch: &[usize]) -> Result<Vec<BatchPair>> {
        let mut seen = HashSet::with_capacity(batch.len());
        let mut labels = Vec::with_capacity(batch.len());
        for &idx in batch {
            if !seen.insert(idx) {
                return Err(Error::config(format!("index {idx} repeated in batch")));
            }
            labels.push(self.label(idx)?);
        }
        let n = batch.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push(BatchPair {
                    i,
                    j,
                    y: Similarity::from_labels(labels[i], labels[j]),
                });
            }
        }
        Ok(pairs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn label_consensus() {
        let o = SimilarityOracle::new(vec![Some(3), Some(3), Some(7), None]);
        assert_eq!(o.y_of(0, 1).unwrap(), Similarity::Similar);
        assert_eq!(o.y_of(0, 2).unwrap(), Similarity::Dissimilar);
        assert_eq!(o.y_of(0, 3).unwrap(), Similarity::Unknown);
        assert_eq!(o.y_of(1, 1).unwrap(), Similarity::Similar);
        assert!(matches!(o.y_of(0, 4), Err(Error::Bounds { index: 4, .. })));
    }

    #[test]
    fn pair_counts() {
        let o = SimilarityOracle::from_known(&[0, 0, 1, 1, 2]);
        assert_eq!(o.batch_pairs(&[0, 1, 2, 3]).unwrap().len(), 6);
        assert!(o.batch_pairs(&[4]).unwrap().is_empty());
        assert!(matches!(o.batch_pairs(&[1, 2, 1]), Err(Error::Config(_))));
        assert!(matches!(o.batch_pairs(&[1, 9]), Err(Error::Bounds { .. })));
    }

    #[test]
    fn hand_enumerated_batch() {
        let o = SimilarityOracle::from_known(&[5, 5, 8]);
        let ys: Vec<i8> = o
            .batch_pairs(&[0, 1, 2])
            .unwrap()
            .iter()
            .map(|p| p.y.value())
            .collect();
        assert_eq!(ys, vec![1, -1, -1]);
    }

    proptest! {
        #[test]
        fn symmetric_and_partitioning(
            labels in proptest::collection::vec(proptest::option::of(0u32..4), 2..30)
        ) {
            let o = SimilarityOracle::new(labels.clone());
            let n = labels.len();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(o.y_of(i, j).unwrap(), o.y_of(j, i).unwrap());
                }
            }
            let batch: Vec<usize> = (0..n).rev().collect();
            let pairs = o.batch_pairs(&batch).unwrap();
            let count = |s| pairs.iter().filter(|p| p.y == s).count();
            prop_assert_eq!(
                count(Similarity::Similar) + count(Similarity::Dissimilar) + count(Similarity::Unknown),
                n * (n - 1) / 2
            );
            for p in &pairs {
                prop_assert!(p.i < p.j);
                prop_assert_eq!(p.y, o.y_of(batch[p.i], batch[p.j]).unwrap());
            }
        }
    }
}
