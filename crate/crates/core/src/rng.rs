//! Seeded random source.
//!
//! The generator is ChaCha8 (`rand_chacha`), whose output stream is fixed
//! by its specification and therefore identical across runs and platforms.
//! Gaussian draws use `rand_distr::StandardNormal` (ziggurat), which is
//! likewise deterministic given the underlying stream.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::scalar::{cst, Scalar};

#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for a named sub-task, derived from the seed
    /// (not from the current stream position).
    pub fn derive(&self, salt: u64) -> Rng {
        // splitmix64 finaliser spreads nearby salts apart
        let mut z = self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Rng::new(z ^ (z >> 31))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.gen()
    }

    /// Uniform integer in `0..=max`.
    pub fn uniform_inclusive(&mut self, max: usize) -> usize {
        self.inner.gen_range(0..=max)
    }

    /// Uniform integer in `0..n`; `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    pub fn uniform<T: Scalar>(&mut self, lo: f64, hi: f64) -> T {
        cst(self.inner.gen_range(lo..hi))
    }

    pub fn gaussian<T: Scalar>(&mut self, std: f64) -> T {
        let v: f64 = self.inner.sample(StandardNormal);
        cst(v * std)
    }

    pub fn gaussian_vec<T: Scalar>(&mut self, n: usize, std: f64) -> Vec<T> {
        (0..n).map(|_| self.gaussian(std)).collect()
    }
}
