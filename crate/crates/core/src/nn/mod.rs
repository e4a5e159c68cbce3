//! Differentiable building blocks of the 3D residual feature extractor.
//!
//! Each operation comes as a pair of pure kernels (`*_forward`, `*_backward`)
//! plus a tape wrapper. Forward passes are deterministic: identical inputs
//! and parameters produce bit-identical outputs.

pub mod batchnorm;
pub mod conv3d;
pub mod init;
pub mod linear;
pub mod pool;
pub mod prelu;
pub mod residual;
pub mod tape;

pub use batchnorm::{batchnorm3d_backward, batchnorm3d_forward, BatchNorm3dParams, BnBatchStats};
pub use conv3d::{conv3d_backward, conv3d_forward, conv3d_out_dims, Conv3dGrads, Conv3dParams};
pub use linear::{linear_backward, linear_forward};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, pool3d_backward, pool3d_forward, pool3d_out_dims,
    PoolKind,
};
pub use prelu::{prelu_backward, prelu_forward};
pub use residual::{Activation, Block, BlockSpec, Genre};
pub use tape::{NodeId, ParamId, Params, Tape, TapeNode};
