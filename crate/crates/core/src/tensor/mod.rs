//! Dense N-dimensional arrays.
//!
//! Layout is frozen: row major, last dimension contiguous. The binary tensor
//! file format and every kernel in the crate depend on this ordering.

mod linalg;
pub(crate) mod ops;
mod reduce;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major tensor. `data.len()` always equals the product of `dims`,
/// `dims` is non-empty and every extent is at least 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    dims: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Validate a shape and return its element count.
    pub fn checked_len(dims: &[usize]) -> Result<usize> {
        if dims.is_empty() {
            return Err(Error::shape("tensor", "dims must be non-empty"));
        }
        let mut n: usize = 1;
        for &d in dims {
            if d == 0 {
                return Err(Error::shape("tensor", format!("zero extent in {dims:?}")));
            }
            n = n
                .checked_mul(d)
                .ok_or_else(|| Error::shape("tensor", format!("extent overflow in {dims:?}")))?;
        }
        Ok(n)
    }

    pub fn new(dims: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let n = Self::checked_len(&dims)?;
        if n != data.len() {
            return Err(Error::shape(
                "tensor",
                format!("dims {dims:?} imply {n} elements, data has {}", data.len()),
            ));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let n = Self::checked_len(dims)?;
        Ok(Tensor {
            dims: dims.to_vec(),
            data: vec![F::zero(); n],
        })
    }

    pub fn full(dims: &[usize], value: F) -> Result<Self> {
        let n = Self::checked_len(dims)?;
        Ok(Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        })
    }

    pub fn ones(dims: &[usize]) -> Result<Self> {
        Self::full(dims, F::one())
    }

    /// Square identity matrix.
    pub fn identity(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = F::one();
        }
        Ok(t)
    }

    pub fn from_fn(dims: &[usize], mut f: impl FnMut(usize) -> F) -> Result<Self> {
        let n = Self::checked_len(dims)?;
        Ok(Tensor {
            dims: dims.to_vec(),
            data: (0..n).map(&mut f).collect(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        false // dims invariant forbids empty tensors
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for i in (0..self.dims.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.dims[i + 1];
        }
        s
    }

    /// Flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dims.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.dims[i]);
            off = off * self.dims[i] + ix;
        }
        off
    }

    pub fn at(&self, index: &[usize]) -> F {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: F) {
        let off = self.offset(index);
        self.data[off] = value;
    }

    /// Same data, new dims; element count must match.
    pub fn reshape(&self, dims: &[usize]) -> Result<Self> {
        let n = Self::checked_len(dims)?;
        if n != self.data.len() {
            return Err(Error::shape(
                "reshape",
                format!("cannot reshape {:?} into {dims:?}", self.dims),
            ));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data: self.data.clone(),
        })
    }

    /// Materialized axis permutation: `perm[i]` names the source axis that
    /// becomes output axis `i`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let r = self.rank();
        if perm.len() != r {
            return Err(Error::shape(
                "permute",
                format!("perm {perm:?} does not match rank {r}"),
            ));
        }
        let mut seen = vec![false; r];
        for &p in perm {
            if p >= r || seen[p] {
                return Err(Error::shape("permute", format!("invalid perm {perm:?}")));
            }
            seen[p] = true;
        }
        let src_strides = self.strides();
        let out_dims: Vec<usize> = perm.iter().map(|&p| self.dims[p]).collect();
        let mut out = Self::zeros(&out_dims)?;
        let mut index = vec![0usize; r];
        for o in 0..out.data.len() {
            let mut src = 0;
            for (axis, &ix) in index.iter().enumerate() {
                src += ix * src_strides[perm[axis]];
            }
            out.data[o] = self.data[src];
            // advance the row-major multi-index
            for axis in (0..r).rev() {
                index[axis] += 1;
                if index[axis] < out_dims[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Ok(out)
    }

    /// 2-D transpose.
    pub fn transpose2d(&self) -> Result<Self> {
        if self.rank() != 2 {
            return Err(Error::shape(
                "transpose",
                format!("expected rank 2, got {:?}", self.dims),
            ));
        }
        self.permute(&[1, 0])
    }

    /// Row `i` of a rank-2 tensor.
    pub fn row(&self, i: usize) -> &[F] {
        debug_assert_eq!(self.rank(), 2);
        let w = self.dims[1];
        &self.data[i * w..(i + 1) * w]
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Element-type conversion (`f32` <-> `f64`).
    pub fn cast<G: Scalar>(&self) -> Tensor<G> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| G::of_f64(v.as_f64())).collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, F> {
        self.data.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn new_validates_length() {
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::<f32>::new(vec![], vec![]).is_err());
        assert!(Tensor::<f32>::new(vec![2, 0], vec![]).is_err());
    }

    #[test]
    fn offset_is_row_major() {
        let t = Tensor::<f32>::from_fn(&[2, 3, 4], |i| i as f32).unwrap();
        assert_eq!(t.at(&[0, 0, 0]), 0.0);
        assert_eq!(t.at(&[0, 0, 3]), 3.0);
        assert_eq!(t.at(&[0, 2, 0]), 8.0);
        assert_eq!(t.at(&[1, 0, 0]), 12.0);
        assert_eq!(t.strides(), vec![12, 4, 1]);
    }

    #[test]
    fn permute_roundtrip() {
        let t = Tensor::<f64>::from_fn(&[2, 3, 5], |i| i as f64).unwrap();
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.dims(), &[5, 2, 3]);
        assert_eq!(p.at(&[4, 1, 2]), t.at(&[1, 2, 4]));
        let back = p.permute(&[1, 2, 0]).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn reshape_preserves_data(n in 1usize..60) {
            let t = Tensor::<f32>::from_fn(&[n, 3], |i| i as f32).unwrap();
            let r = t.reshape(&[3, n]).unwrap();
            prop_assert_eq!(r.data(), t.data());
            prop_assert!(t.reshape(&[n, 4]).is_err() || n == 4);
        }
    }
}
