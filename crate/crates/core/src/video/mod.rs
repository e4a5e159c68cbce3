//! Clip construction, augmentation, dataset splitting and the synthetic
//! identity-video generator.

pub mod augment;
pub mod split;
pub mod synthetic;

pub use augment::{
    augment_clip, center_clip, corner_crop, hflip, mean_subtract, resize_bilinear, sample_clip,
    AugmentMode, AugmentPolicy, CropPosition,
};
pub use split::{split_dataset, split_dataset_counts, split_dataset_stratified, DatasetSplit};
pub use synthetic::{generate_synthetic, ClassPattern, SyntheticSpec};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// One video: frames `[T, 3, H, W]` with values in `[0, 1]`, an identity
/// label and a source identifier.
#[derive(Debug, Clone)]
pub struct Video<F: Scalar> {
    pub frames: Tensor<F>,
    pub label: usize,
    pub source: String,
}

impl<F: Scalar> Video<F> {
    pub fn new(frames: Tensor<F>, label: usize, source: impl Into<String>) -> Result<Self> {
        if frames.rank() != 4 || frames.dims()[1] != 3 {
            return Err(Error::Input(format!(
                "video frames must be [T, 3, H, W], got {:?}",
                frames.dims()
            )));
        }
        Ok(Video {
            frames,
            label,
            source: source.into(),
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.dims()[0]
    }

    pub fn height(&self) -> usize {
        self.frames.dims()[2]
    }

    pub fn width(&self) -> usize {
        self.frames.dims()[3]
    }
}
