//! End-user surface: training and evaluation loops, experiment
//! configuration, checkpointing, metrics logging, gradient-check suites and
//! synthetic dataset generation.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod embeddings;
pub mod gradcheck;
pub mod train;

pub use checkpoint::{load_checkpoint, restore, save_checkpoint, Checkpoint, OptimizerBuffers};
pub use config::{fnv1a64, OptimizerKind, TrainConfig};
pub use dataset::{channel_means, gen_data, load_dataset, Dataset};
pub use embeddings::{extract_embeddings, EmbeddingsOut};
pub use gradcheck::{run_gradcheck, run_gradcheck_as, GradcheckReport, Scope};
pub use train::{
    evaluate, evaluate_with_embeddings, trailing_mean, train, train_resume,
    train_resume_with_progress, train_with_progress, EvalReport, MetricsRow, SplitSel,
    TrainOutcome, METRICS_HEADER,
};
