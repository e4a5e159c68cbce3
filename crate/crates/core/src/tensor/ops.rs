//! Elementwise arithmetic with scalar and trailing-dimension broadcast.
//!
//! Binary ops accept a right operand that either matches the left shape
//! exactly, is a single element, or matches the trailing dimensions of the
//! left operand (so a `[C]` bias broadcasts over `[B, C]`).

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Tensor;

enum Broadcast {
    Same,
    Scalar,
    Trailing(usize), // cycle length of the right operand
}

fn broadcast_of<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> Result<Broadcast> {
    if a.dims() == b.dims() {
        return Ok(Broadcast::Same);
    }
    if b.len() == 1 {
        return Ok(Broadcast::Scalar);
    }
    let (ar, br) = (a.rank(), b.rank());
    if br < ar && a.dims()[ar - br..] == *b.dims() {
        return Ok(Broadcast::Trailing(b.len()));
    }
    Err(Error::shape(
        op,
        format!("operands {:?} and {:?} do not broadcast", a.dims(), b.dims()),
    ))
}

impl<F: Scalar> Tensor<F> {
    fn binary(&self, other: &Self, op: &'static str, f: impl Fn(F, F) -> F) -> Result<Self> {
        let data = match broadcast_of(op, self, other)? {
            Broadcast::Same => self
                .data()
                .iter()
                .zip(other.data())
                .map(|(&a, &b)| f(a, b))
                .collect(),
            Broadcast::Scalar => {
                let b = other.data()[0];
                self.data().iter().map(|&a| f(a, b)).collect()
            }
            Broadcast::Trailing(cycle) => self
                .data()
                .iter()
                .enumerate()
                .map(|(i, &a)| f(a, other.data()[i % cycle]))
                .collect(),
        };
        Tensor::new(self.dims().to_vec(), data)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.binary(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.binary(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.binary(other, "mul", |a, b| a * b)
    }

    /// Elementwise maximum.
    pub fn max_elem(&self, other: &Self) -> Result<Self> {
        self.binary(other, "max", |a, b| if b > a { b } else { a })
    }

    pub fn scale(&self, k: F) -> Self {
        self.map(|v| v * k)
    }

    pub fn exp(&self) -> Self {
        self.map(|v| v.exp())
    }

    /// Natural logarithm; rejects non-positive inputs.
    pub fn ln(&self) -> Result<Self> {
        for (i, &v) in self.data().iter().enumerate() {
            if v <= F::zero() {
                return Err(Error::domain(
                    "log",
                    format!("non-positive value {v} at flat index {i}"),
                ));
            }
        }
        Ok(self.map(|v| v.ln()))
    }

    pub fn cos(&self) -> Self {
        self.map(|v| v.cos())
    }

    /// Arccosine with the input clamped to `[-1, 1]` first, so dot products
    /// that drift past the bounds by rounding stay well-defined.
    pub fn acos(&self) -> Self {
        self.map(|v| clamp_unit(v).acos())
    }

    // In-place updates used by the optimizer and gradient accumulation.

    pub fn add_in_place(&mut self, other: &Self) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                "add_in_place",
                format!("{:?} vs {:?}", self.dims(), other.dims()),
            ));
        }
        for (a, &b) in self.data_mut().iter_mut().zip(other.data()) {
            *a += b;
        }
        Ok(())
    }

    /// `self += alpha * other`
    pub fn add_scaled_in_place(&mut self, other: &Self, alpha: F) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::shape(
                "add_scaled_in_place",
                format!("{:?} vs {:?}", self.dims(), other.dims()),
            ));
        }
        for (a, &b) in self.data_mut().iter_mut().zip(other.data()) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: F) {
        for v in self.data_mut() {
            *v = value;
        }
    }
}

#[inline]
pub(crate) fn clamp_unit<F: Scalar>(v: F) -> F {
    if v > F::one() {
        F::one()
    } else if v < -F::one() {
        -F::one()
    } else {
        v
    }
}
