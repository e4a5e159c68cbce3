//! Matrix products with 64-bit partial sums.
//!
//! Accumulation runs in `f64` regardless of the element type, in a fixed
//! k-major order, so results are deterministic and the 32-bit path keeps
//! enough precision for gradient checking.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

fn check_2d<F: Scalar>(op: &'static str, t: &Tensor<F>) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::shape(op, format!("expected rank 2, got {:?}", t.dims())));
    }
    Ok((t.dims()[0], t.dims()[1]))
}

impl<F: Scalar> Tensor<F> {
    /// `self[M,K] x other[K,N] -> [M,N]`
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = check_2d("matmul", self)?;
        let (k2, n) = check_2d("matmul", other)?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("inner extents disagree: {:?} x {:?}", self.dims(), other.dims()),
            ));
        }
        let mut out = vec![F::zero(); m * n];
        let mut acc = vec![0.0f64; n];
        for i in 0..m {
            acc.fill(0.0);
            let arow = self.row(i);
            for (kk, &a) in arow.iter().enumerate() {
                let av = a.as_f64();
                let brow = &other.data()[kk * n..(kk + 1) * n];
                for (dst, &b) in acc.iter_mut().zip(brow) {
                    *dst += av * b.as_f64();
                }
            }
            for (dst, &v) in out[i * n..(i + 1) * n].iter_mut().zip(&acc) {
                *dst = F::of_f64(v);
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self[M,K] x other[N,K]^T -> [M,N]` (both operands row-major friendly).
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        let (m, k) = check_2d("matmul", self)?;
        let (n, k2) = check_2d("matmul", other)?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!(
                    "inner extents disagree: {:?} x {:?}^T",
                    self.dims(),
                    other.dims()
                ),
            ));
        }
        let mut out = vec![F::zero(); m * n];
        for i in 0..m {
            let arow = self.row(i);
            for j in 0..n {
                let brow = other.row(j);
                let mut acc = 0.0f64;
                for (&a, &b) in arow.iter().zip(brow) {
                    acc += a.as_f64() * b.as_f64();
                }
                out[i * n + j] = F::of_f64(acc);
            }
        }
        Tensor::new(vec![m, n], out)
    }

    /// `self[K,M]^T x other[K,N] -> [M,N]`
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        let (k, m) = check_2d("matmul", self)?;
        let (k2, n) = check_2d("matmul", other)?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!(
                    "inner extents disagree: {:?}^T x {:?}",
                    self.dims(),
                    other.dims()
                ),
            ));
        }
        let mut acc = vec![0.0f64; m * n];
        for kk in 0..k {
            let arow = self.row(kk);
            let brow = other.row(kk);
            for (i, &a) in arow.iter().enumerate() {
                let av = a.as_f64();
                let dst = &mut acc[i * n..(i + 1) * n];
                for (d, &b) in dst.iter_mut().zip(brow) {
                    *d += av * b.as_f64();
                }
            }
        }
        let out: Vec<F> = acc.into_iter().map(F::of_f64).collect();
        Tensor::new(vec![m, n], out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn identity_times_b_is_b() {
        let id = Tensor::<f32>::identity(3).unwrap();
        let mut rng = Rng::new(5);
        let b: Tensor<f32> = rng.uniform(&[3, 4]).unwrap();
        let c = id.matmul(&b).unwrap();
        assert_eq!(c.data(), b.data());
    }

    #[test]
    fn hand_summed_product() {
        let a = Tensor::new(vec![2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 1], vec![1.0f64, 1.0]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.dims(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn mismatch_names_both_operands() {
        let a = Tensor::<f32>::ones(&[2, 3]).unwrap();
        let b = Tensor::<f32>::ones(&[4, 5]).unwrap();
        let err = a.matmul(&b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[4, 5]"), "{msg}");
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = Rng::new(99);
        let a: Tensor<f32> = rng.uniform(&[7, 5]).unwrap();
        let b: Tensor<f32> = rng.uniform(&[5, 3]).unwrap();
        let c = a.matmul(&b).unwrap();
        // independent naive triple loop in f64
        for i in 0..7 {
            for j in 0..3 {
                let mut want = 0.0f64;
                for k in 0..5 {
                    want += a.at(&[i, k]) as f64 * b.at(&[k, j]) as f64;
                }
                let got = c.at(&[i, j]) as f64;
                let rel = (got - want).abs() / want.abs().max(1e-12);
                assert!(rel <= 1e-6, "({i},{j}): got {got}, want {want}");
            }
        }
    }

    #[test]
    fn transposed_variants_agree_with_plain() {
        let mut rng = Rng::new(3);
        let a: Tensor<f64> = rng.uniform(&[4, 6]).unwrap();
        let b: Tensor<f64> = rng.uniform(&[6, 5]).unwrap();
        let plain = a.matmul(&b).unwrap();
        let nt = a.matmul_nt(&b.transpose2d().unwrap()).unwrap();
        let tn = a.transpose2d().unwrap().matmul_tn(&b).unwrap();
        for ((x, y), z) in plain.iter().zip(nt.iter()).zip(tn.iter()) {
            assert!((x - y).abs() < 1e-12 && (x - z).abs() < 1e-12);
        }
    }

    #[test]
    fn associativity_within_tolerance() {
        let mut rng = Rng::new(17);
        let a: Tensor<f32> = rng.uniform(&[8, 8]).unwrap();
        let b: Tensor<f32> = rng.uniform(&[8, 8]).unwrap();
        let c: Tensor<f32> = rng.uniform(&[8, 8]).unwrap();
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        let max_abs = left
            .iter()
            .zip(right.iter())
            .map(|(l, r)| (l - r).abs())
            .fold(0.0f32, f32::max);
        assert!(max_abs <= 1e-4, "max abs diff {max_abs}");
    }
}
