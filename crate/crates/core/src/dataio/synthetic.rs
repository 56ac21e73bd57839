//! Labelled Gaussian blobs around random per-class template images, for
//! tests and desk-scale experiments that must not depend on downloads.

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::{cst, Scalar};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Standard deviation of the per-pixel noise around the template.
    pub spread: f64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("synthetic data needs at least 2 classes"));
        }
        if self.per_class == 0 {
            return Err(Error::config(
                "synthetic data needs at least 1 sample per class",
            ));
        }
        if self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::config("synthetic image dimensions must be positive"));
        }
        if !self.spread.is_finite() || self.spread < 0.0 {
            return Err(Error::config("spread must be finite and non-negative"));
        }
        Ok(())
    }

    fn pixels(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Class templates; sampling from the same templates yields matching train
/// and query splits.
#[derive(Debug, Clone)]
pub struct SyntheticBlobs {
    spec: SyntheticSpec,
    templates: Vec<Vec<f64>>,
}

impl SyntheticBlobs {
    pub fn new(spec: SyntheticSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let templates = (0..spec.classes)
            .map(|_| {
                (0..spec.pixels())
                    .map(|_| rng.uniform::<f64>(0.0, 1.0))
                    .collect()
            })
            .collect();
        Ok(SyntheticBlobs { spec, templates })
    }

    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    pub fn template(&self, class: usize) -> &[f64] {
        &self.templates[class]
    }

    /// `per_class` samples of every class, interleaved so sample `i` has
    /// label `i % classes`.
    pub fn sample<T: Scalar>(
        &self,
        per_class: usize,
        rng: &mut Rng,
        split: Split,
    ) -> Result<LabeledDataset<T>> {
        let s = &self.spec;
        let n = s.classes * per_class;
        let mut data = Vec::with_capacity(n * s.pixels());
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % s.classes;
            labels.push(class as u32);
            for &t in &self.templates[class] {
                let v = if s.spread > 0.0 {
                    t + rng.gaussian::<f64>(s.spread)
                } else {
                    t
                };
                data.push(cst::<T>(v.clamp(0.0, 1.0)));
            }
        }
        let images = Tensor::from_vec(vec![n, s.channels, s.height, s.width], data)?;
        LabeledDataset::new(images, labels, s.classes, split)
    }
}

/// Draws templates and `spec.per_class` samples per class from one stream.
pub fn gen_synthetic<T: Scalar>(spec: SyntheticSpec, rng: &mut Rng) -> Result<LabeledDataset<T>> {
    let blobs = SyntheticBlobs::new(spec, rng)?;
    blobs.sample(spec.per_class, rng, Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(spread: f64) -> SyntheticSpec {
        SyntheticSpec {
            classes: 2,
            per_class: 5,
            channels: 1,
            height: 3,
            width: 4,
            spread,
        }
    }

    #[test]
    fn counts_and_labels() {
        let ds = gen_synthetic::<f64>(spec(0.2), &mut Rng::new(1)).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.labels().iter().filter(|&&l| l == 0).count(), 5);
        assert_eq!(ds.labels().iter().filter(|&&l| l == 1).count(), 5);
        assert!(ds.images().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn zero_spread_reproduces_templates() {
        let mut rng = Rng::new(4);
        let blobs = SyntheticBlobs::new(spec(0.0), &mut rng).unwrap();
        let ds = blobs.sample::<f64>(3, &mut rng, Split::Train).unwrap();
        for i in 0..ds.len() {
            assert_eq!(ds.images().row(i), blobs.template(ds.labels()[i] as usize));
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = gen_synthetic::<f64>(spec(0.3), &mut Rng::new(9)).unwrap();
        let b = gen_synthetic::<f64>(spec(0.3), &mut Rng::new(9)).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic::<f64>(spec(0.3), &mut Rng::new(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_bad_arguments() {
        let mut s = spec(0.1);
        s.classes = 1;
        assert!(matches!(
            gen_synthetic::<f64>(s, &mut Rng::new(0)),
            Err(Error::Config(_))
        ));
        let mut s = spec(0.1);
        s.per_class = 0;
        assert!(gen_synthetic::<f64>(s, &mut Rng::new(0)).is_err());
        assert!(gen_synthetic::<f64>(spec(-1.0), &mut Rng::new(0)).is_err());
    }
}
