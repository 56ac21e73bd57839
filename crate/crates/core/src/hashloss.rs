//! Exponentiated code-product loss and its smoothed per-bit surrogate.
//!
//! For a pair `(i, j)` with label `y` and K-bit codes `b_i`, `b_j`, the exact
//! loss is `exp(-y * (b_i . b_j) / K)`. It factors into a leave-one-out
//! weight `exp(-y * partial_k)` times `exp(-y * b_i(k) b_j(k) / K)`, and the
//! second factor is exactly linear in the bit product `p = b_i(k) b_j(k)`:
//! `c + c' p` with `c = cosh(y/K)` and `c' = -sinh(y/K)`. Replacing `p` by
//! `2 sigma(w_k' z_i z_j' w_k) - 1` gives the per-bit loss `l_k`, and the
//! pair loss is approximated by `mean_k l_k`.
//!
//! Gradients keep every constant (the `1/K` of the mean and the `2` of the
//! sigmoid relaxation), so they are exact derivatives of
//! [`approx_pair_loss`] with the codes held fixed.

use crate::bitcode::BitCode;
use crate::error::{Error, Result};
use crate::scalar::{cst, sigmoid, Scalar};
use crate::supervision::{BatchPair, Similarity};
use crate::tensor::{dot, gemm, MatView, Tensor};

/// Normalised code product `(1/K) sum_k b_i(k) b_j(k)`, in `[-1, 1]`.
pub fn code_product<T: Scalar>(a: &BitCode, b: &BitCode) -> Result<T> {
    a.check_len(b)?;
    if a.is_empty() {
        return Err(Error::config("code product of zero-length codes"));
    }
    Ok(code_product_unchecked(a, b))
}

#[inline]
fn code_product_unchecked<T: Scalar>(a: &BitCode, b: &BitCode) -> T {
    let k = a.len() as i64;
    let agree = k - 2 * i64::from(a.xor_count(b));
    cst::<T>(agree as f64) / cst::<T>(k as f64)
}

/// Code product with bit `k` removed (still normalised by the full `K`).
pub fn partial_code_product<T: Scalar>(a: &BitCode, b: &BitCode, k: usize) -> Result<T> {
    let full: T = code_product(a, b)?;
    let bit = a.sign(k)? * b.sign(k)?;
    Ok(full - cst::<T>(f64::from(bit)) / cst::<T>(a.len() as f64))
}

/// Exact atomic loss `exp(-y * code_product)`.
pub fn atomic_loss<T: Scalar>(a: &BitCode, b: &BitCode, y: Similarity) -> Result<T> {
    let cp: T = code_product(a, b)?;
    Ok((-y.as_scalar::<T>() * cp).exp())
}

/// The two constants that linearise `exp(-y p / K)` over `p in {-1, +1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairConstants<T> {
    pub c: T,
    pub c_prime: T,
}

pub fn pair_constants<T: Scalar>(y: Similarity, bits: usize) -> Result<PairConstants<T>> {
    if bits == 0 {
        return Err(Error::config("bit count must be at least 1"));
    }
    if y == Similarity::Unknown {
        return Ok(PairConstants {
            c: T::one(),
            c_prime: T::zero(),
        });
    }
    let t = y.as_scalar::<T>() / cst::<T>(bits as f64);
    let half = cst::<T>(0.5);
    Ok(PairConstants {
        c: half * ((-t).exp() + t.exp()),
        c_prime: half * ((-t).exp() - t.exp()),
    })
}

/// `w_k' z_i z_j' w_k`, i.e. the product of the two projections.
pub fn bilinear_form<T: Scalar>(w_k: &[T], z_i: &[T], z_j: &[T]) -> Result<T> {
    if w_k.len() != z_i.len() || w_k.len() != z_j.len() {
        return Err(Error::dim(format!(
            "hash row has dim {}, features have dims {} and {}",
            w_k.len(),
            z_i.len(),
            z_j.len()
        )));
    }
    Ok(dot(w_k, z_i) * dot(w_k, z_j))
}

/// Smooth stand-in for `sign(w_k' z_i) sign(w_k' z_j)`: `2 sigma(u) - 1`.
pub fn smoothed_bit_product<T: Scalar>(w_k: &[T], z_i: &[T], z_j: &[T]) -> Result<T> {
    let u = bilinear_form(w_k, z_i, z_j)?;
    Ok(relaxed(u))
}

#[inline]
fn relaxed<T: Scalar>(u: T) -> T {
    cst::<T>(2.0) * sigmoid(u) - T::one()
}

/// Leave-one-out weight `exp(-y * partial_k)`.
#[inline]
fn loo_weight<T: Scalar>(cp: T, bit_product: i8, bits: usize, y: T) -> T {
    let partial = cp - cst::<T>(f64::from(bit_product)) / cst::<T>(bits as f64);
    (-y * partial).exp()
}

/// Per-bit approximate loss `l_k` for bit `k` of the pair.
#[allow(clippy::too_many_arguments)]
pub fn bitwise_loss<T: Scalar>(
    w_k: &[T],
    z_i: &[T],
    z_j: &[T],
    b_i: &BitCode,
    b_j: &BitCode,
    y: Similarity,
    k: usize,
) -> Result<T> {
    let partial: T = partial_code_product(b_i, b_j, k)?;
    let consts = pair_constants::<T>(y, b_i.len())?;
    let smooth = smoothed_bit_product(w_k, z_i, z_j)?;
    Ok((-y.as_scalar::<T>() * partial).exp() * (consts.c + consts.c_prime * smooth))
}

fn check_head<T: Scalar>(w: &Tensor<T>, b_i: &BitCode, b_j: &BitCode) -> Result<(usize, usize)> {
    let (bits, dim) = w.dims2()?;
    b_i.check_len(b_j)?;
    if b_i.len() != bits {
        return Err(Error::dim(format!(
            "hash head has {bits} rows but codes have {} bits",
            b_i.len()
        )));
    }
    if bits == 0 {
        return Err(Error::config("bit count must be at least 1"));
    }
    Ok((bits, dim))
}

/// Approximate pair loss `(1/K) sum_k l_k`. `w` is the `K x dim(z)` hash head.
pub fn approx_pair_loss<T: Scalar>(
    w: &Tensor<T>,
    z_i: &[T],
    z_j: &[T],
    b_i: &BitCode,
    b_j: &BitCode,
    y: Similarity,
) -> Result<T> {
    let (bits, _) = check_head(w, b_i, b_j)?;
    let mut total = T::zero();
    for k in 0..bits {
        total += bitwise_loss(w.row(k), z_i, z_j, b_i, b_j, y, k)?;
    }
    Ok(total / cst::<T>(bits as f64))
}

/// Gradient contribution of a single pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients<T> {
    /// `K x dim(z)`; row `k` only receives bit `k`'s term.
    pub grad_w: Tensor<T>,
    pub grad_z_i: Vec<T>,
    pub grad_z_j: Vec<T>,
}

/// Derivatives of [`approx_pair_loss`] with respect to every `w_k`, `z_i`
/// and `z_j`, holding the codes fixed.
pub fn pair_gradients<T: Scalar>(
    w: &Tensor<T>,
    z_i: &[T],
    z_j: &[T],
    b_i: &BitCode,
    b_j: &BitCode,
    y: Similarity,
) -> Result<PairGradients<T>> {
    let (bits, dim) = check_head(w, b_i, b_j)?;
    if z_i.len() != dim || z_j.len() != dim {
        return Err(Error::dim(format!(
            "features have dims {} and {}, hash head expects {dim}",
            z_i.len(),
            z_j.len()
        )));
    }
    let mut out = PairGradients {
        grad_w: Tensor::zeros(&[bits, dim]),
        grad_z_i: vec![T::zero(); dim],
        grad_z_j: vec![T::zero(); dim],
    };
    if y == Similarity::Unknown {
        return Ok(out);
    }
    let consts = pair_constants::<T>(y, bits)?;
    let yv = y.as_scalar::<T>();
    let cp: T = code_product_unchecked(b_i, b_j);
    let scale = cst::<T>(2.0) / cst::<T>(bits as f64);
    for k in 0..bits {
        let w_k = w.row(k);
        let p_i = dot(w_k, z_i);
        let p_j = dot(w_k, z_j);
        let s = sigmoid(p_i * p_j);
        let bp = b_i.sign_unchecked(k) * b_j.sign_unchecked(k);
        let g = scale * loo_weight(cp, bp, bits, yv) * consts.c_prime * s * (T::one() - s);
        // d u / d w_k = z_i p_j + z_j p_i = (z_i z_j' + z_j z_i') w_k
        let gw = out.grad_w.row_mut(k);
        for d in 0..dim {
            gw[d] = g * (z_i[d] * p_j + z_j[d] * p_i);
            // d u / d z_i = w_k w_k' z_j
            out.grad_z_i[d] += g * p_j * w_k[d];
            out.grad_z_j[d] += g * p_i * w_k[d];
        }
    }
    Ok(out)
}

/// Gradients emitted by the hashing layer for one mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct HashLayerGradients<T> {
    /// `K x dim(z)`.
    pub grad_w: Tensor<T>,
    /// `batch x dim(z)`, one row per batch sample.
    pub grad_z: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss<T> {
    /// Sum of approximate pair losses over the batch pairs.
    pub q: T,
    pub grads: HashLayerGradients<T>,
}

/// Sum of [`approx_pair_loss`] over `pairs` together with the summed
/// gradients.
///
/// Works from the projection matrix `P = Z W'`: with `g_ijk` the scalar
/// derivative of pair `(i, j)` at bit `k`, both gradients factor through
/// the `batch x K` matrix `A[i,k] = sum_j g_ijk P[j,k]`, giving
/// `dQ/dW = A' Z` and `dQ/dZ = A W`.
pub fn accumulate_batch<T: Scalar>(
    pairs: &[BatchPair],
    z: &Tensor<T>,
    codes: &[BitCode],
    w: &Tensor<T>,
) -> Result<BatchLoss<T>> {
    let (bits, dim) = w.dims2()?;
    let (batch, zdim) = z.dims2()?;
    if zdim != dim {
        return Err(Error::dim(format!(
            "features have dim {zdim}, hash head expects {dim}"
        )));
    }
    if codes.len() != batch {
        return Err(Error::dim(format!(
            "{} codes for a batch of {batch}",
            codes.len()
        )));
    }
    if let Some(bad) = codes.iter().find(|c| c.len() != bits) {
        return Err(Error::dim(format!(
            "code has {} bits, hash head has {bits}",
            bad.len()
        )));
    }
    if bits == 0 {
        return Err(Error::config("bit count must be at least 1"));
    }

    let mut proj = vec![T::zero(); batch * bits];
    gemm(
        T::one(),
        MatView::row_major(z.data(), batch, dim),
        MatView::row_major(w.data(), bits, dim).t(),
        T::zero(),
        &mut proj,
    );

    let kf = cst::<T>(bits as f64);
    let scale = cst::<T>(2.0) / kf;
    let similar = pair_constants::<T>(Similarity::Similar, bits)?;
    let dissimilar = pair_constants::<T>(Similarity::Dissimilar, bits)?;
    let mut coeff = vec![T::zero(); batch * bits];
    let mut q = T::zero();

    for pair in pairs {
        let (i, j) = (pair.i, pair.j);
        if i >= batch || j >= batch {
            return Err(Error::Bounds {
                index: i.max(j),
                len: batch,
            });
        }
        let consts = match pair.y {
            Similarity::Unknown => {
                // c = 1, c' = 0 and the exponent vanishes: l_k == 1 exactly.
                q += T::one();
                continue;
            }
            Similarity::Similar => similar,
            Similarity::Dissimilar => dissimilar,
        };
        let yv = pair.y.as_scalar::<T>();
        let cp: T = code_product_unchecked(&codes[i], &codes[j]);
        let mut pair_loss = T::zero();
        for k in 0..bits {
            let p_i = proj[i * bits + k];
            let p_j = proj[j * bits + k];
            let s = sigmoid(p_i * p_j);
            let bp = codes[i].sign_unchecked(k) * codes[j].sign_unchecked(k);
            let weight = loo_weight(cp, bp, bits, yv);
            pair_loss += weight * (consts.c + consts.c_prime * (cst::<T>(2.0) * s - T::one()));
            let g = scale * weight * consts.c_prime * s * (T::one() - s);
            coeff[i * bits + k] += g * p_j;
            coeff[j * bits + k] += g * p_i;
        }
        q += pair_loss / kf;
    }

    let mut grad_w = Tensor::zeros(&[bits, dim]);
    gemm(
        T::one(),
        MatView::row_major(&coeff, batch, bits).t(),
        MatView::row_major(z.data(), batch, dim),
        T::zero(),
        grad_w.data_mut(),
    );
    let mut grad_z = Tensor::zeros(&[batch, dim]);
    gemm(
        T::one(),
        MatView::row_major(&coeff, batch, bits),
        MatView::row_major(w.data(), bits, dim),
        T::zero(),
        grad_z.data_mut(),
    );
    Ok(BatchLoss {
        q,
        grads: HashLayerGradients { grad_w, grad_z },
    })
}

/// Hard codes `sign(W z)` for every row of `z` (`sign(0) = +1`).
pub fn encode_features<T: Scalar>(z: &Tensor<T>, w: &Tensor<T>) -> Result<Vec<BitCode>> {
    let (bits, dim) = w.dims2()?;
    let (n, zdim) = z.dims2()?;
    if zdim != dim {
        return Err(Error::dim(format!(
            "features have dim {zdim}, hash head expects {dim}"
        )));
    }
    let mut proj = vec![T::zero(); n * bits];
    gemm(
        T::one(),
        MatView::row_major(z.data(), n, dim),
        MatView::row_major(w.data(), bits, dim).t(),
        T::zero(),
        &mut proj,
    );
    Ok((0..n)
        .map(|i| {
            let row = &proj[i * bits..(i + 1) * bits];
            let bools: Vec<bool> = row.iter().map(|&v| crate::scalar::sign_bit(v)).collect();
            BitCode::from_bools(&bools)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    fn code(s: &[i8]) -> BitCode {
        BitCode::from_signs(s)
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn code_product_examples() {
        let a = code(&[1, 1, -1, 1]);
        let b = code(&[1, -1, -1, 1]);
        assert_eq!(code_product::<f64>(&a, &a).unwrap(), 1.0);
        assert_eq!(code_product::<f64>(&a, &a.complement()).unwrap(), -1.0);
        assert_eq!(code_product::<f64>(&a, &b).unwrap(), 0.5);
        assert!(matches!(
            code_product::<f64>(&a, &code(&[1, 1])),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn partial_code_product_examples() {
        let a = code(&[1, 1, -1, 1]);
        let b = code(&[1, -1, -1, 1]);
        for k in 0..4 {
            assert_eq!(partial_code_product::<f64>(&a, &a, k).unwrap(), 0.75);
        }
        // the disagreeing bit is index 1 (0-based)
        assert_eq!(partial_code_product::<f64>(&a, &b, 1).unwrap(), 0.75);
        for k in 0..4 {
            let bit = f64::from(a.sign(k).unwrap() * b.sign(k).unwrap());
            let restored = partial_code_product::<f64>(&a, &b, k).unwrap() + bit / 4.0;
            assert_eq!(restored, code_product::<f64>(&a, &b).unwrap());
        }
        assert!(matches!(
            partial_code_product::<f64>(&a, &b, 4),
            Err(Error::Bounds { .. })
        ));
    }

    #[test]
    fn atomic_loss_examples() {
        let a = code(&[1, -1, 1]);
        let b = code(&[-1, -1, 1]);
        assert_eq!(
            atomic_loss::<f64>(&a, &b, Similarity::Unknown).unwrap(),
            1.0
        );
        assert!(close(
            atomic_loss::<f64>(&a, &a, Similarity::Similar).unwrap(),
            1.0 / std::f64::consts::E,
            1e-6
        ));
        assert!(close(
            atomic_loss::<f64>(&a, &a, Similarity::Dissimilar).unwrap(),
            std::f64::consts::E,
            1e-6
        ));
    }

    #[test]
    fn pair_constant_examples() {
        let z = pair_constants::<f64>(Similarity::Unknown, 7).unwrap();
        assert_eq!((z.c, z.c_prime), (1.0, 0.0));
        let pc = pair_constants::<f64>(Similarity::Similar, 12).unwrap();
        assert!(close(pc.c, 1.003474, 1e-6));
        assert!(close(pc.c_prime, -0.083430, 1e-6));
        assert!(close(pc.c + pc.c_prime, (-1.0f64 / 12.0).exp(), 1e-15));
        assert!(close(pc.c - pc.c_prime, (1.0f64 / 12.0).exp(), 1e-15));
        assert!(matches!(
            pair_constants::<f64>(Similarity::Similar, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn smoothed_product_examples() {
        assert_eq!(smoothed_bit_product(&[1.0], &[0.0], &[3.0]).unwrap(), 0.0);
        let ln3 = 3.0f64.ln().sqrt();
        assert!(close(
            smoothed_bit_product(&[1.0], &[ln3], &[ln3]).unwrap(),
            0.5,
            1e-12
        ));
        let r = 50.0f64.sqrt();
        assert!(close(
            smoothed_bit_product(&[1.0], &[r], &[r]).unwrap(),
            1.0,
            1e-9
        ));
        assert!(close(
            smoothed_bit_product(&[1.0], &[r], &[-r]).unwrap(),
            -1.0,
            1e-9
        ));
        assert!(smoothed_bit_product(&[1.0, 2.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn bitwise_loss_examples() {
        let one = code(&[1]);
        let w = [0.3, -1.2];
        let zi = [2.0, 0.1];
        let zj = [-0.7, 4.0];
        let b2 = code(&[1, -1]);
        for k in 0..2 {
            let l =
                bitwise_loss(&w, &zi, &zj, &b2, &b2.complement(), Similarity::Unknown, k).unwrap();
            assert_eq!(l, 1.0);
        }
        // K=1, y=+1, w=1, z_i=z_j=2: partial product 0, bilinear 4.
        // Reference from an independent scalar evaluation:
        // cosh(1) - sinh(1) * (2/(1+e^-4) - 1) = 0.4101543
        let l = bitwise_loss(&[1.0], &[2.0], &[2.0], &one, &one, Similarity::Similar, 0).unwrap();
        let sig4 = 1.0 / (1.0 + (-4.0f64).exp());
        let expected = 1.0f64.cosh() - 1.0f64.sinh() * (2.0 * sig4 - 1.0);
        assert!(close(l, expected, 1e-15));
        assert!(close(l, 0.4101543, 1e-7));
    }

    #[test]
    fn saturated_bitwise_loss_is_exact() {
        let w = [10.0];
        let zi = [3.0];
        let zj = [-4.0];
        let bi = code(&[1, 1, -1]);
        let bj = code(&[-1, 1, -1]);
        for &y in &[Similarity::Similar, Similarity::Dissimilar] {
            let l = bitwise_loss(&w, &zi, &zj, &bi, &bj, y, 0).unwrap();
            let exact: f64 = atomic_loss(&bi, &bj, y).unwrap();
            assert!(close(l, exact, 1e-12));
        }
    }

    fn random_instance(
        rng: &mut Rng,
        bits: usize,
        dim: usize,
    ) -> (Tensor<f64>, Vec<f64>, Vec<f64>) {
        let w = Tensor::from_vec(vec![bits, dim], rng.gaussian_vec(bits * dim, 1.0)).unwrap();
        (w, rng.gaussian_vec(dim, 1.0), rng.gaussian_vec(dim, 1.0))
    }

    fn codes_of(w: &Tensor<f64>, z: &[f64]) -> BitCode {
        let zt = Tensor::from_vec(vec![1, z.len()], z.to_vec()).unwrap();
        encode_features(&zt, w).unwrap().remove(0)
    }

    #[test]
    fn approx_pair_loss_is_mean_of_bitwise() {
        let mut rng = Rng::new(17);
        let (w, zi, zj) = random_instance(&mut rng, 8, 5);
        let (bi, bj) = (codes_of(&w, &zi), codes_of(&w, &zj));
        for &y in &[
            Similarity::Similar,
            Similarity::Dissimilar,
            Similarity::Unknown,
        ] {
            let mut by_hand = 0.0;
            for k in 0..8 {
                by_hand += bitwise_loss(w.row(k), &zi, &zj, &bi, &bj, y, k).unwrap();
            }
            let l = approx_pair_loss(&w, &zi, &zj, &bi, &bj, y).unwrap();
            assert!(close(l, by_hand / 8.0, 1e-14));
            assert_eq!(l, approx_pair_loss(&w, &zj, &zi, &bj, &bi, y).unwrap());
        }
        let l0 = approx_pair_loss(&w, &zi, &zj, &bi, &bj, Similarity::Unknown).unwrap();
        assert_eq!(l0, 1.0);
    }

    #[test]
    fn unknown_pairs_have_zero_gradient() {
        let mut rng = Rng::new(3);
        let (w, zi, zj) = random_instance(&mut rng, 4, 3);
        let g = pair_gradients(
            &w,
            &zi,
            &zj,
            &codes_of(&w, &zi),
            &codes_of(&w, &zj),
            Similarity::Unknown,
        )
        .unwrap();
        assert!(g
            .grad_w
            .data()
            .iter()
            .chain(&g.grad_z_i)
            .chain(&g.grad_z_j)
            .all(|&v| v == 0.0));
    }

    #[test]
    fn pair_gradient_w_is_symmetric_in_the_pair() {
        let mut rng = Rng::new(4);
        let (w, zi, zj) = random_instance(&mut rng, 6, 4);
        let (bi, bj) = (codes_of(&w, &zi), codes_of(&w, &zj));
        let a = pair_gradients(&w, &zi, &zj, &bi, &bj, Similarity::Similar).unwrap();
        let b = pair_gradients(&w, &zj, &zi, &bj, &bi, Similarity::Similar).unwrap();
        for (x, y) in a.grad_w.data().iter().zip(b.grad_w.data()) {
            assert!(close(*x, *y, 1e-15));
        }
        assert_eq!(a.grad_z_i, b.grad_z_j);
    }

    /// Central differences of `approx_pair_loss` with codes frozen.
    fn fd_check(seed: u64) {
        let mut rng = Rng::new(seed);
        let bits = 1 + rng.below(8);
        let dim = 1 + rng.below(20);
        let (w, zi, zj) = random_instance(&mut rng, bits, dim);
        let w = w.scale(0.5);
        let (bi, bj) = (codes_of(&w, &zi), codes_of(&w, &zj));
        let y = if rng.below(2) == 0 {
            Similarity::Similar
        } else {
            Similarity::Dissimilar
        };
        let g = pair_gradients(&w, &zi, &zj, &bi, &bj, y).unwrap();
        let h = 1e-5;
        let loss = |w: &Tensor<f64>, zi: &[f64], zj: &[f64]| {
            approx_pair_loss(w, zi, zj, &bi, &bj, y).unwrap()
        };
        let agree =
            |a: f64, n: f64| (a - n).abs() <= 1e-7 || (a - n).abs() <= 1e-4 * a.abs().max(n.abs());
        for idx in 0..w.len() {
            let mut wp = w.clone();
            wp.data_mut()[idx] += h;
            let mut wm = w.clone();
            wm.data_mut()[idx] -= h;
            let num = (loss(&wp, &zi, &zj) - loss(&wm, &zi, &zj)) / (2.0 * h);
            assert!(
                agree(g.grad_w.data()[idx], num),
                "w[{idx}] {} vs {num}",
                g.grad_w.data()[idx]
            );
        }
        for d in 0..dim {
            let (mut p, mut m) = (zi.clone(), zi.clone());
            p[d] += h;
            m[d] -= h;
            let num = (loss(&w, &p, &zj) - loss(&w, &m, &zj)) / (2.0 * h);
            assert!(agree(g.grad_z_i[d], num));
            let (mut p, mut m) = (zj.clone(), zj.clone());
            p[d] += h;
            m[d] -= h;
            let num = (loss(&w, &zi, &p) - loss(&w, &zi, &m)) / (2.0 * h);
            assert!(agree(g.grad_z_j[d], num));
        }
    }

    #[test]
    fn pair_gradients_match_finite_differences() {
        for seed in 0..100 {
            fd_check(seed);
        }
    }

    fn batch_instance(
        seed: u64,
        n: usize,
    ) -> (Vec<BatchPair>, Tensor<f64>, Vec<BitCode>, Tensor<f64>) {
        let mut rng = Rng::new(seed);
        let bits = 5;
        let dim = 7;
        let w = Tensor::from_vec(vec![bits, dim], rng.gaussian_vec(bits * dim, 0.5)).unwrap();
        let z = Tensor::from_vec(vec![n, dim], rng.gaussian_vec(n * dim, 1.0)).unwrap();
        let codes = encode_features(&z, &w).unwrap();
        let labels: Vec<Option<u32>> = (0..n)
            .map(|_| match rng.below(4) {
                3 => None,
                l => Some(l as u32),
            })
            .collect();
        let oracle = crate::supervision::SimilarityOracle::new(labels);
        let pairs = oracle.batch_pairs(&(0..n).collect::<Vec<_>>()).unwrap();
        (pairs, z, codes, w)
    }

    #[test]
    fn batch_accumulation_matches_pairwise_sum() {
        let (pairs, z, codes, w) = batch_instance(11, 4);
        assert_eq!(pairs.len(), 6);
        let got = accumulate_batch(&pairs, &z, &codes, &w).unwrap();
        let mut q = 0.0;
        let mut gw = Tensor::zeros(&[5, 7]);
        let mut gz = Tensor::zeros(&[4, 7]);
        for p in &pairs {
            q += approx_pair_loss(&w, z.row(p.i), z.row(p.j), &codes[p.i], &codes[p.j], p.y)
                .unwrap();
            let g =
                pair_gradients(&w, z.row(p.i), z.row(p.j), &codes[p.i], &codes[p.j], p.y).unwrap();
            gw.add_assign(&g.grad_w).unwrap();
            for d in 0..7 {
                gz.row_mut(p.i)[d] += g.grad_z_i[d];
                gz.row_mut(p.j)[d] += g.grad_z_j[d];
            }
        }
        assert!(close(got.q, q, 1e-12));
        for (a, b) in got.grads.grad_w.data().iter().zip(gw.data()) {
            assert!(close(*a, *b, 1e-12));
        }
        for (a, b) in got.grads.grad_z.data().iter().zip(gz.data()) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn batch_degenerate_cases() {
        let (pairs, z, codes, w) = batch_instance(12, 3);
        let single = accumulate_batch(&pairs[..1], &z, &codes, &w).unwrap();
        let p = pairs[0];
        let expected: f64 =
            approx_pair_loss(&w, z.row(p.i), z.row(p.j), &codes[p.i], &codes[p.j], p.y).unwrap();
        assert!(close(single.q, expected, 1e-14));

        let empty = accumulate_batch::<f64>(&[], &z, &codes, &w).unwrap();
        assert_eq!(empty.q, 0.0);
        assert!(empty.grads.grad_w.data().iter().all(|&v| v == 0.0));

        let unknown: Vec<BatchPair> = pairs
            .iter()
            .map(|p| BatchPair {
                y: Similarity::Unknown,
                ..*p
            })
            .collect();
        let u = accumulate_batch(&unknown, &z, &codes, &w).unwrap();
        assert_eq!(u.q, 3.0);
        assert!(u.grads.grad_z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pair_order_does_not_matter() {
        let (mut pairs, z, codes, w) = batch_instance(13, 6);
        let a = accumulate_batch(&pairs, &z, &codes, &w).unwrap();
        pairs.reverse();
        let b = accumulate_batch(&pairs, &z, &codes, &w).unwrap();
        assert!(close(a.q, b.q, 1e-9));
        for (x, y) in a.grads.grad_w.data().iter().zip(b.grads.grad_w.data()) {
            assert!(close(*x, *y, 1e-9));
        }
    }

    #[test]
    fn encode_tie_and_odd_symmetry() {
        let z = Tensor::from_vec(vec![1, 2], vec![1.0, -1.0]).unwrap();
        let w = Tensor::from_vec(vec![3, 2], vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(encode_features(&z, &w).unwrap()[0].signs(), vec![1, -1, 1]);
    }

    #[test]
    fn descent_step_lowers_batch_loss() {
        for seed in 20..30 {
            let (pairs, z, codes, w) = batch_instance(seed, 6);
            let before = accumulate_batch(&pairs, &z, &codes, &w).unwrap();
            let w2 = crate::tensor::sgd_step(&w, &before.grads.grad_w, 1e-3).unwrap();
            let after = accumulate_batch(&pairs, &z, &codes, &w2).unwrap();
            assert!(
                after.q < before.q,
                "seed {seed}: {} !< {}",
                after.q,
                before.q
            );
        }
    }
}
