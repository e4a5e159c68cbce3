//! Axis reductions. Sums and means accumulate in `f64`; argmax breaks ties
//! toward the lowest index.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

/// Split dims into (outer, axis extent, inner) around `axis`.
fn split_at_axis(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = dims[..axis].iter().product();
    let inner: usize = dims[axis + 1..].iter().product();
    (outer, dims[axis], inner)
}

fn reduced_dims(dims: &[usize], axis: usize) -> Vec<usize> {
    let mut d: Vec<usize> = dims.to_vec();
    d.remove(axis);
    if d.is_empty() {
        d.push(1); // reducing a rank-1 tensor yields a single-element tensor
    }
    d
}

impl<F: Scalar> Tensor<F> {
    fn check_axis(&self, op: &'static str, axis: usize) -> Result<()> {
        if axis >= self.rank() {
            return Err(Error::shape(
                op,
                format!("axis {axis} out of range for dims {:?}", self.dims()),
            ));
        }
        Ok(())
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Self> {
        self.check_axis("sum", axis)?;
        let (outer, n, inner) = split_at_axis(self.dims(), axis);
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut acc = 0.0f64;
                for j in 0..n {
                    acc += self.data()[(o * n + j) * inner + i].as_f64();
                }
                out[o * inner + i] = F::of_f64(acc);
            }
        }
        Tensor::new(reduced_dims(self.dims(), axis), out)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Self> {
        self.check_axis("mean", axis)?;
        let n = self.dims()[axis];
        Ok(self.sum_axis(axis)?.scale(F::of_f64(1.0 / n as f64)))
    }

    pub fn max_axis(&self, axis: usize) -> Result<Self> {
        self.check_axis("max", axis)?;
        let (outer, n, inner) = split_at_axis(self.dims(), axis);
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = self.data()[(o * n) * inner + i];
                for j in 1..n {
                    let v = self.data()[(o * n + j) * inner + i];
                    if v > best {
                        best = v;
                    }
                }
                out[o * inner + i] = best;
            }
        }
        Tensor::new(reduced_dims(self.dims(), axis), out)
    }

    /// Indices of the per-slice maxima along `axis`, encoded as scalars.
    /// Ties resolve to the lowest index.
    pub fn argmax_axis(&self, axis: usize) -> Result<Self> {
        self.check_axis("argmax", axis)?;
        let (outer, n, inner) = split_at_axis(self.dims(), axis);
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..inner {
                let mut best = self.data()[(o * n) * inner + i];
                let mut best_j = 0usize;
                for j in 1..n {
                    let v = self.data()[(o * n + j) * inner + i];
                    if v > best {
                        best = v;
                        best_j = j;
                    }
                }
                out[o * inner + i] = F::of_f64(best_j as f64);
            }
        }
        Tensor::new(reduced_dims(self.dims(), axis), out)
    }

    /// Full sum over all elements, in f64.
    pub fn sum(&self) -> f64 {
        self.data().iter().map(|v| v.as_f64()).sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn max_val(&self) -> F {
        let mut best = self.data()[0];
        for &v in &self.data()[1..] {
            if v > best {
                best = v;
            }
        }
        best
    }

    /// Argmax of a rank-1 tensor, lowest index on ties.
    pub fn argmax1d(&self) -> usize {
        let mut best = self.data()[0];
        let mut best_i = 0usize;
        for (i, &v) in self.data().iter().enumerate().skip(1) {
            if v > best {
                best = v;
                best_i = i;
            }
        }
        best_i
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_vector() {
        let t = Tensor::new(vec![3], vec![1.0f32, 2.0, 3.0]).unwrap();
        let m = t.mean_axis(0).unwrap();
        assert_eq!(m.dims(), &[1]);
        assert_eq!(m.data()[0], 2.0);
    }

    #[test]
    fn argmax_tie_breaks_low() {
        let t = Tensor::new(vec![3], vec![0.2f32, 0.9, 0.9]).unwrap();
        assert_eq!(t.argmax1d(), 1);
        let a = t.argmax_axis(0).unwrap();
        assert_eq!(a.data()[0], 1.0);
    }

    #[test]
    fn sum_over_leading_axis() {
        let t = Tensor::<f64>::ones(&[4, 3]).unwrap();
        let s = t.sum_axis(0).unwrap();
        assert_eq!(s.dims(), &[3]);
        assert_eq!(s.data(), &[4.0, 4.0, 4.0]);
    }

    #[test]
    fn axis_out_of_range() {
        let t = Tensor::<f32>::ones(&[2, 2]).unwrap();
        match t.sum_axis(2) {
            Err(Error::Shape { .. }) => {}
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn middle_axis_reduction() {
        let t = Tensor::<f64>::from_fn(&[2, 3, 2], |i| i as f64).unwrap();
        let s = t.sum_axis(1).unwrap();
        assert_eq!(s.dims(), &[2, 2]);
        // slice [0,:,0] = {0, 2, 4} -> 6 ; [0,:,1] = {1, 3, 5} -> 9
        assert_eq!(s.data(), &[6.0, 9.0, 24.0, 27.0]);
    }
}
