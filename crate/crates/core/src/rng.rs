//! Deterministic pseudorandom generator.
//!
//! The generator is SplitMix64 (Steele et al., "Fast splittable pseudorandom
//! number generators"): a 64-bit counter advanced by the golden-ratio
//! increment and scrambled by two xor-multiply rounds. It is frozen as the
//! crate's only randomness source so that seeded runs reproduce bit-for-bit.
//!
//! Independent streams for (seed, epoch, clip, ...) tuples are derived by
//! folding each component through the same scrambler, so data loading order
//! and thread count can never change the draws a clip receives.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output scrambler.
#[inline]
fn mix(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Derive an independent stream from a seed and a tuple of stream labels.
    ///
    /// `stream(&[seed, epoch, clip_id])` yields the same draws no matter
    /// where or when it is called.
    pub fn stream(parts: &[u64]) -> Self {
        let mut state = GOLDEN;
        for (i, &p) in parts.iter().enumerate() {
            state = mix(state ^ p.wrapping_add(mix(i as u64 + 1)));
        }
        Rng { state }
    }

    /// Raw state, for checkpointing.
    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn from_state(state: u64) -> Self {
        Rng { state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix(self.state)
    }

    /// Uniform draw in `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `[0, n)` via the multiply-shift range map.
    #[inline]
    pub fn range(&mut self, n: usize) -> usize {
        assert!(n > 0, "range over empty interval");
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// One standard-normal draw by the Box-Muller transform. Each draw
    /// consumes exactly two uniforms (the paired solution is discarded so the
    /// generator state stays a single u64).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64(); // in (0, 1]
        let u2 = self.next_f64();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.range(i + 1);
            xs.swap(i, j);
        }
    }

    /// Tensor of uniform draws in `[0, 1)`.
    pub fn uniform<F: Scalar>(&mut self, dims: &[usize]) -> Result<Tensor<F>> {
        let n = Tensor::<F>::checked_len(dims)?;
        let data = (0..n).map(|_| F::of_f64(self.next_f64())).collect();
        Tensor::new(dims.to_vec(), data)
    }

    /// Tensor of normal draws with the given mean and standard deviation.
    pub fn normal<F: Scalar>(&mut self, dims: &[usize], mean: F, std: F) -> Result<Tensor<F>> {
        if std < F::zero() {
            return Err(Error::Config(format!(
                "normal draws need std >= 0, got {std}"
            )));
        }
        let n = Tensor::<F>::checked_len(dims)?;
        let data = (0..n)
            .map(|_| mean + std * F::of_f64(self.next_normal()))
            .collect();
        Tensor::new(dims.to_vec(), data)
    }
}
