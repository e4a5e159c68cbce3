//! Scalar abstraction: every kernel is generic over `f32`/`f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, NumAssign, NumCast};

/// Floating-point element type of [`crate::Tensor`].
///
/// Implemented for `f32` (training, file I/O) and `f64` (verification mode).
pub trait Scalar:
    Float + FloatConst + NumAssign + NumCast + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy cast from `f64`; the standard route for literals in generic code.
    fn of_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 -> Scalar cast")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar -> f64 cast")
    }

    /// True when this type is the 32-bit variant (file format, tolerance picks).
    fn is_f32() -> bool {
        std::mem::size_of::<Self>() == 4
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
