//! A compact deep-learning stack for video identity recognition.
//!
//! The crate provides dense tensors with deterministic kernels, 3D residual
//! feature extractors, an angular-margin softmax loss head with analytic
//! gradients, Adamax/SGD optimizers, the video clip augmentation pipeline,
//! and a training harness with checkpointing and metrics logging.
//!
//! All numeric code is generic over the scalar type (`f32` or `f64` via
//! [`Scalar`]). Training and file I/O run in single precision; the gradient
//! verification suites run the same code in double precision.

pub mod check;
pub mod error;
pub mod harness;
pub mod io;
pub mod loss;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod video;

pub use error::{Error, Result};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Single-precision tensor: the storage type for training, videos and files.
pub type Tensor32 = Tensor<f32>;
/// Double-precision tensor used by the gradient verification suites.
pub type Tensor64 = Tensor<f64>;
