//! K-bit signatures in `{-1, +1}^K`, stored packed (bit set <=> +1).

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitCode {
    len: usize,
    words: Vec<u64>,
}

pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl BitCode {
    /// All-(-1) code of `len` bits.
    pub fn negative(len: usize) -> Self {
        BitCode {
            len,
            words: vec![0; words_for(len)],
        }
    }

    /// Builds a code from signs; any value `>= 0` counts as +1.
    pub fn from_signs(signs: &[i8]) -> Self {
        let mut code = Self::negative(signs.len());
        for (k, &s) in signs.iter().enumerate() {
            code.set(k, s >= 0);
        }
        code
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut code = Self::negative(bits.len());
        for (k, &b) in bits.iter().enumerate() {
            code.set(k, b);
        }
        code
    }

    /// Rebuilds a code from packed words; bits past `len` must be clear.
    pub fn from_words(len: usize, words: Vec<u64>) -> Result<Self> {
        if words.len() != words_for(len) {
            return Err(Error::dim(format!(
                "{len}-bit code needs {} words, got {}",
                words_for(len),
                words.len()
            )));
        }
        let tail = len % 64;
        if tail != 0 && words.last().is_some_and(|w| w >> tail != 0) {
            return Err(Error::config("padding bits beyond code length are set"));
        }
        Ok(BitCode { len, words })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn set(&mut self, k: usize, positive: bool) {
        let (w, b) = (k / 64, k % 64);
        if positive {
            self.words[w] |= 1 << b;
        } else {
            self.words[w] &= !(1 << b);
        }
    }

    /// Bit `k` as +1 or -1.
    pub fn sign(&self, k: usize) -> Result<i8> {
        if k >= self.len {
            return Err(Error::Bounds {
                index: k,
                len: self.len,
            });
        }
        Ok(self.sign_unchecked(k))
    }

    #[inline]
    pub(crate) fn sign_unchecked(&self, k: usize) -> i8 {
        if (self.words[k / 64] >> (k % 64)) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn signs(&self) -> Vec<i8> {
        (0..self.len).map(|k| self.sign_unchecked(k)).collect()
    }

    /// The complementary code `-b`.
    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        for w in &mut out.words {
            *w = !*w;
        }
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = out.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
        out
    }

    pub(crate) fn check_len(&self, other: &BitCode) -> Result<()> {
        if self.len != other.len {
            return Err(Error::dim(format!(
                "code lengths differ: {} vs {}",
                self.len, other.len
            )));
        }
        Ok(())
    }

    /// Number of disagreeing bits, via popcount of the packed XOR.
    pub(crate) fn xor_count(&self, other: &BitCode) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}
