//! Loss heads: the angular-margin softmax on the hypersphere, the plain
//! cross-entropy baseline, and angle diagnostics.

pub mod angular;
pub mod cross_entropy;
pub mod stats;

pub use angular::{
    angles, asoftmax_backward, asoftmax_forward, asoftmax_loss, psi, psi_dtheta, AngularLossConfig,
    AsoftmaxForward, ClassifierWeights, FeatureBatch, LambdaSchedule,
};
pub use cross_entropy::{cross_entropy_backward, cross_entropy_loss, CrossEntropyForward};
pub use stats::{angle_stats, AngleStats};
