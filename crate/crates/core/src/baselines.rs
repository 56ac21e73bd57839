//! Shallow hashing baselines on extracted features: random Gaussian
//! projections (LSH) and principal directions (PCAH).

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::bitcode::BitCode;
use crate::dataio::{ByteReader, ByteWriter, CodeDatabase};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{gemm, MatView, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HasherKind {
    Lsh,
    Pcah,
}

impl HasherKind {
    pub fn name(self) -> &'static str {
        match self {
            HasherKind::Lsh => "lsh",
            HasherKind::Pcah => "pcah",
        }
    }
}

/// Bit `k` of feature `z` is `sign(row_k . (z - mean))`, with `sign(0) = +1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHasher {
    pub kind: HasherKind,
    /// `K x dim`
    pub projection: Tensor<f64>,
    /// Centering vector; zero for LSH.
    pub mean: Vec<f64>,
    /// Set when fewer than `K` principal directions carry variance, so
    /// some rows are an arbitrary orthonormal completion.
    pub rank_deficient: bool,
}

impl LinearHasher {
    pub fn bits(&self) -> usize {
        self.projection.rows()
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn encode<T: Scalar>(&self, features: &Tensor<T>) -> Result<Vec<BitCode>> {
        let (n, dim) = features.dims2()?;
        if dim != self.dim() {
            return Err(Error::dim(format!(
                "features have dim {dim}, hasher expects {}",
                self.dim()
            )));
        }
        let bits = self.bits();
        let mut centered = Vec::with_capacity(n * dim);
        for i in 0..n {
            for (v, m) in features.row(i).iter().zip(&self.mean) {
                centered.push(v.to_f64().unwrap_or(f64::NAN) - m);
            }
        }
        let mut proj = vec![0.0; n * bits];
        gemm(
            1.0,
            MatView::row_major(&centered, n, dim),
            MatView::row_major(self.projection.data(), bits, dim).t(),
            0.0,
            &mut proj,
        );
        Ok((0..n)
            .map(|i| {
                let bools: Vec<bool> = proj[i * bits..(i + 1) * bits]
                    .iter()
                    .map(|&v| v >= 0.0)
                    .collect();
                BitCode::from_bools(&bools)
            })
            .collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new(MAGIC, VERSION);
        w.u8(match self.kind {
            HasherKind::Lsh => 0,
            HasherKind::Pcah => 1,
        });
        w.u8(u8::from(self.rank_deficient));
        w.u32(self.bits() as u32);
        w.u32(self.dim() as u32);
        for &v in self.projection.data().iter().chain(&self.mean) {
            w.f64(v);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::open(bytes, MAGIC, VERSION)?;
        let at = r.offset();
        let kind = match r.u8()? {
            0 => HasherKind::Lsh,
            1 => HasherKind::Pcah,
            k => return Err(Error::format(at, format!("unknown hasher kind {k}"))),
        };
        let rank_deficient = r.u8()? != 0;
        let bits = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let at = r.offset();
        let need = (bits + 1) * dim * 8;
        let body = r
            .take(need)
            .map_err(|_| Error::format(at, "truncated hasher payload"))?;
        r.expect_end()?;
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(LinearHasher {
            kind,
            projection: Tensor::from_vec(vec![bits, dim], vals[..bits * dim].to_vec())?,
            mean: vals[bits * dim..].to_vec(),
            rank_deficient,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

const MAGIC: &[u8; 8] = b"DHHASHR\0";
const VERSION: u32 = 1;

/// Rows drawn i.i.d. standard normal.
pub fn lsh_train(dim: usize, bits: usize, rng: &mut Rng) -> Result<LinearHasher> {
    if dim == 0 || bits == 0 {
        return Err(Error::config("lsh needs positive dimension and bit count"));
    }
    Ok(LinearHasher {
        kind: HasherKind::Lsh,
        projection: Tensor::from_vec(vec![bits, dim], rng.gaussian_vec(bits * dim, 1.0))?,
        mean: vec![0.0; dim],
        rank_deficient: false,
    })
}

/// Top-`bits` eigenvectors of the feature covariance, by decreasing
/// eigenvalue. Each row's sign is fixed so its largest-magnitude entry is
/// positive.
pub fn pcah_train<T: Scalar>(features: &Tensor<T>, bits: usize) -> Result<LinearHasher> {
    let (n, dim) = features.dims2()?;
    if bits == 0 {
        return Err(Error::config("bit count must be at least 1"));
    }
    if bits > dim {
        return Err(Error::config(format!(
            "{bits} bits exceed feature dimension {dim}"
        )));
    }
    if n == 0 {
        return Err(Error::config("pcah needs at least one training sample"));
    }
    let mut mean = vec![0.0; dim];
    let mut x: Vec<f64> = features
        .data()
        .iter()
        .map(|v| v.to_f64().unwrap_or(f64::NAN))
        .collect();
    for row in x.chunks(dim) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    for row in x.chunks_mut(dim) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut cov = vec![0.0; dim * dim];
    gemm(
        1.0 / (n.max(2) - 1) as f64,
        MatView::row_major(&x, n, dim).t(),
        MatView::row_major(&x, n, dim),
        0.0,
        &mut cov,
    );
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("features contain non-finite values"));
    }
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(dim, dim, &cov));
    let mut idx: Vec<usize> = (0..dim).collect();
    idx.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let top = eig.eigenvalues[idx[0]].max(0.0);
    let floor = top * 1e-12 * dim as f64;
    let mut rank_deficient = top == 0.0;
    let mut projection = Vec::with_capacity(bits * dim);
    for &c in &idx[..bits] {
        if eig.eigenvalues[c] <= floor {
            rank_deficient = true;
        }
        let col: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = col.iter().enumerate().fold(
            0,
            |best, (i, v)| if v.abs() > col[best].abs() { i } else { best },
        );
        let s = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        projection.extend(col.iter().map(|v| v * s));
    }
    Ok(LinearHasher {
        kind: HasherKind::Pcah,
        projection: Tensor::from_vec(vec![bits, dim], projection)?,
        mean,
        rank_deficient,
    })
}

pub fn linear_encode<T: Scalar>(
    hasher: &LinearHasher,
    features: &Tensor<T>,
    labels: &[u32],
) -> Result<CodeDatabase> {
    CodeDatabase::new(hasher.bits(), hasher.encode(features)?, labels.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row_dot(h: &LinearHasher, a: usize, b: usize) -> f64 {
        h.projection
            .row(a)
            .iter()
            .zip(h.projection.row(b))
            .map(|(x, y)| x * y)
            .sum()
    }

    #[test]
    fn lsh_shapes_and_determinism() {
        let a = lsh_train(5, 3, &mut Rng::new(8)).unwrap();
        assert_eq!(a, lsh_train(5, 3, &mut Rng::new(8)).unwrap());
        assert_eq!(
            lsh_train(1, 1, &mut Rng::new(8)).unwrap().projection.len(),
            1
        );
        assert!(lsh_train(0, 3, &mut Rng::new(8)).is_err());
        assert!(lsh_train(3, 0, &mut Rng::new(8)).is_err());
    }

    #[test]
    fn zero_features_give_all_plus() {
        let h = lsh_train(4, 6, &mut Rng::new(2)).unwrap();
        let codes = h.encode(&Tensor::<f64>::zeros(&[3, 4])).unwrap();
        assert!(codes.iter().all(|c| c.signs() == vec![1; 6]));
    }

    #[test]
    fn negated_row_flips_one_bit() {
        let mut h = lsh_train(3, 4, &mut Rng::new(5)).unwrap();
        let z = Tensor::from_vec(vec![5, 3], Rng::new(6).gaussian_vec::<f64>(15, 1.0)).unwrap();
        let before = h.encode(&z).unwrap();
        for v in h.projection.row_mut(2) {
            *v = -*v;
        }
        let after = h.encode(&z).unwrap();
        for (a, b) in before.iter().zip(&after) {
            let (sa, sb) = (a.signs(), b.signs());
            assert_eq!(sa[2], -sb[2]);
            assert_eq!((sa[0], sa[1], sa[3]), (sb[0], sb[1], sb[3]));
        }
    }

    #[test]
    fn hand_projection() {
        let h = LinearHasher {
            kind: HasherKind::Lsh,
            projection: Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap(),
            mean: vec![0.0, 0.0],
            rank_deficient: false,
        };
        // rows: (1,2) -> (-1, 4.5); (3,-1) -> (4, -0.5); (-2,1) -> (-3, 1)
        let z = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![-2.0, 1.0]]).unwrap();
        let db = linear_encode(&h, &z, &[0, 1, 2]).unwrap();
        let signs: Vec<Vec<i8>> = db.codes().iter().map(BitCode::signs).collect();
        assert_eq!(signs, vec![vec![-1, 1], vec![1, -1], vec![-1, 1]]);
        assert!(h.encode(&Tensor::<f64>::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn pcah_line_direction() {
        let dir = [0.6, 0.8];
        let rows: Vec<Vec<f64>> = (0..9)
            .map(|t| vec![1.0 + dir[0] * t as f64, -2.0 + dir[1] * t as f64])
            .collect();
        let h = pcah_train(&Tensor::from_rows(&rows).unwrap(), 1).unwrap();
        let r = h.projection.row(0);
        assert!((r[0] - 0.6).abs() < 1e-6 && (r[1] - 0.8).abs() < 1e-6);
        assert!(!h.rank_deficient);
        let h2 = pcah_train(&Tensor::from_rows(&rows).unwrap(), 2).unwrap();
        assert!(h2.rank_deficient);
        assert!(row_dot(&h2, 0, 1).abs() < 1e-8);
    }

    #[test]
    fn pcah_orthonormal_and_duplicate_invariant() {
        let mut rng = Rng::new(11);
        let data: Vec<f64> = rng.gaussian_vec(40 * 6, 1.0);
        let z = Tensor::from_vec(vec![40, 6], data.clone()).unwrap();
        let h = pcah_train(&z, 6).unwrap();
        for a in 0..6 {
            for b in 0..6 {
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((row_dot(&h, a, b) - want).abs() < 1e-8);
            }
        }
        let mut doubled = data.clone();
        doubled.extend_from_slice(&data);
        let h2 = pcah_train(&Tensor::from_vec(vec![80, 6], doubled).unwrap(), 3).unwrap();
        for k in 0..3 {
            for (a, b) in h.projection.row(k).iter().zip(h2.projection.row(k)) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        assert!(pcah_train(&z, 7).is_err());
    }

    #[test]
    fn serialization_roundtrip() {
        let z = Tensor::from_vec(vec![10, 3], Rng::new(1).gaussian_vec::<f64>(30, 1.0)).unwrap();
        let h = pcah_train(&z, 2).unwrap();
        assert_eq!(LinearHasher::from_bytes(&h.to_bytes()).unwrap(), h);
        let bytes = h.to_bytes();
        assert!(LinearHasher::from_bytes(&bytes[..bytes.len() - 9]).is_err());
    }
}
