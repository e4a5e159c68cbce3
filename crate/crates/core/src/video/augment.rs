//! The clip augmentation chain: temporal sampling with frame looping,
//! horizontal flip, multiscale square cropping at the four corners or the
//! center, bilinear resize to the network input size, and per-channel mean
//! subtraction.
//!
//! One random draw per clip per stage, in the frozen order: temporal window,
//! flip, crop position, scale. Eval mode takes the center window, no flip,
//! the center crop at scale 1, and is fully deterministic.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::Video;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropPosition {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
    Center,
}

pub const CROP_POSITIONS: [CropPosition; 5] = [
    CropPosition::TopLeft,
    CropPosition::TopRight,
    CropPosition::BottomLeft,
    CropPosition::BottomRight,
    CropPosition::Center,
];

/// Scale factors `{2^-1/4, 2^-1/2, 2^-3/4, 1/2}` drawn uniformly in train mode.
pub fn default_scale_set() -> [f64; 4] {
    [
        0.5f64.powf(0.25),
        0.5f64.powf(0.5),
        0.5f64.powf(0.75),
        0.5,
    ]
}

#[derive(Debug, Clone)]
pub struct AugmentPolicy<F: Scalar> {
    pub clip_len: usize,
    pub flip_prob: f64,
    pub scale_set: Vec<f64>,
    pub out_size: usize,
    pub channel_means: [F; 3],
}

impl<F: Scalar> AugmentPolicy<F> {
    pub fn validate(&self) -> Result<()> {
        if self.clip_len == 0 || self.out_size == 0 {
            return Err(Error::Config(
                "augment policy needs clip_len >= 1 and out_size >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.flip_prob) {
            return Err(Error::Config(format!(
                "flip probability {} outside [0, 1]",
                self.flip_prob
            )));
        }
        if self.scale_set.is_empty() || self.scale_set.iter().any(|&s| s <= 0.0 || s > 1.0) {
            return Err(Error::Config(format!(
                "scale set {:?} must be non-empty with values in (0, 1]",
                self.scale_set
            )));
        }
        Ok(())
    }
}

impl<F: Scalar> Default for AugmentPolicy<F> {
    fn default() -> Self {
        AugmentPolicy {
            clip_len: 16,
            flip_prob: 0.5,
            scale_set: default_scale_set().to_vec(),
            out_size: 112,
            channel_means: [F::zero(); 3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    Train,
    Eval,
}

fn copy_frame<F: Scalar>(dst: &mut [F], src: &Tensor<F>, frame: usize) {
    let frame_len: usize = src.dims()[1..].iter().product();
    dst.copy_from_slice(&src.data()[frame * frame_len..(frame + 1) * frame_len]);
}

fn gather_clip<F: Scalar>(v: &Video<F>, clip_len: usize, start: usize) -> Result<Tensor<F>> {
    let t = v.frame_count();
    let mut out = Tensor::zeros(&[clip_len, 3, v.height(), v.width()])?;
    let frame_len = 3 * v.height() * v.width();
    for i in 0..clip_len {
        // looping: frames past the end wrap around modulo the video length
        let src = if t >= clip_len { start + i } else { i % t };
        copy_frame(
            &mut out.data_mut()[i * frame_len..(i + 1) * frame_len],
            &v.frames,
            src,
        );
    }
    Ok(out)
}

/// Random contiguous window of `clip_len` frames; videos shorter than the
/// clip are looped from frame 0 (`i mod T`).
pub fn sample_clip<F: Scalar>(v: &Video<F>, clip_len: usize, rng: &mut Rng) -> Result<Tensor<F>> {
    if clip_len == 0 {
        return Err(Error::Config("clip_len must be >= 1".into()));
    }
    let t = v.frame_count();
    let start = if t >= clip_len {
        rng.range(t - clip_len + 1)
    } else {
        0
    };
    gather_clip(v, clip_len, start)
}

/// Deterministic center window used at evaluation time.
pub fn center_clip<F: Scalar>(v: &Video<F>, clip_len: usize) -> Result<Tensor<F>> {
    if clip_len == 0 {
        return Err(Error::Config("clip_len must be >= 1".into()));
    }
    let t = v.frame_count();
    let start = if t >= clip_len { (t - clip_len) / 2 } else { 0 };
    gather_clip(v, clip_len, start)
}

/// Square crop of side `round(scale * min(H, W))` at the given position,
/// identical across all frames of the stack `[T, 3, H, W]`.
pub fn corner_crop<F: Scalar>(
    stack: &Tensor<F>,
    position: CropPosition,
    scale: f64,
) -> Result<Tensor<F>> {
    if stack.rank() != 4 {
        return Err(Error::shape(
            "corner_crop",
            format!("expected [T, C, H, W], got {:?}", stack.dims()),
        ));
    }
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(Error::Config(format!("crop scale {scale} outside (0, 1]")));
    }
    let (t_n, c_n, h, w) = (
        stack.dims()[0],
        stack.dims()[1],
        stack.dims()[2],
        stack.dims()[3],
    );
    let side = ((scale * h.min(w) as f64).round() as usize).max(1);
    let (y0, x0) = match position {
        CropPosition::TopLeft => (0, 0),
        CropPosition::TopRight => (0, w - side),
        CropPosition::BottomLeft => (h - side, 0),
        CropPosition::BottomRight => (h - side, w - side),
        CropPosition::Center => ((h - side) / 2, (w - side) / 2),
    };
    let mut out = Tensor::zeros(&[t_n, c_n, side, side])?;
    let od = out.data_mut();
    let xd = stack.data();
    for t in 0..t_n {
        for c in 0..c_n {
            let src_plane = ((t * c_n + c) * h) * w;
            let dst_plane = ((t * c_n + c) * side) * side;
            for row in 0..side {
                let src = src_plane + (y0 + row) * w + x0;
                let dst = dst_plane + row * side;
                od[dst..dst + side].copy_from_slice(&xd[src..src + side]);
            }
        }
    }
    Ok(out)
}

/// Per-frame bilinear resize with half-pixel-centered sampling:
/// `src = (dst + 0.5) * in/out - 0.5`, clamped to the valid range. A resize
/// to the same size is a bit-identical pass-through.
pub fn resize_bilinear<F: Scalar>(stack: &Tensor<F>, out_size: usize) -> Result<Tensor<F>> {
    if stack.rank() != 4 {
        return Err(Error::shape(
            "resize",
            format!("expected [T, C, H, W], got {:?}", stack.dims()),
        ));
    }
    if out_size == 0 {
        return Err(Error::Config("resize target must be >= 1".into()));
    }
    let (t_n, c_n, h, w) = (
        stack.dims()[0],
        stack.dims()[1],
        stack.dims()[2],
        stack.dims()[3],
    );
    if h == out_size && w == out_size {
        return Ok(stack.clone());
    }
    // precompute the sampling grid once per axis; interpolation itself runs
    // in the element type
    let axis_map = |in_extent: usize| -> Vec<(usize, usize, F)> {
        (0..out_size)
            .map(|d| {
                let src = ((d as f64 + 0.5) * in_extent as f64 / out_size as f64 - 0.5)
                    .clamp(0.0, (in_extent - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(in_extent - 1);
                (lo, hi, F::of_f64(src - lo as f64))
            })
            .collect()
    };
    let ys = axis_map(h);
    let xs = axis_map(w);
    let mut out = Tensor::zeros(&[t_n, c_n, out_size, out_size])?;
    let od = out.data_mut();
    let xd = stack.data();
    for t in 0..t_n {
        for c in 0..c_n {
            let src_plane = ((t * c_n + c) * h) * w;
            let dst_plane = ((t * c_n + c) * out_size) * out_size;
            for (dy, &(y0, y1, fy)) in ys.iter().enumerate() {
                let top_row = &xd[src_plane + y0 * w..src_plane + y0 * w + w];
                let bot_row = &xd[src_plane + y1 * w..src_plane + y1 * w + w];
                let dst = &mut od[dst_plane + dy * out_size..dst_plane + (dy + 1) * out_size];
                for (o, &(x0, x1, fx)) in dst.iter_mut().zip(&xs) {
                    let top = top_row[x0] + (top_row[x1] - top_row[x0]) * fx;
                    let bot = bot_row[x0] + (bot_row[x1] - bot_row[x0]) * fx;
                    *o = top + (bot - top) * fy;
                }
            }
        }
    }
    Ok(out)
}

/// One Bernoulli draw per clip; on success the width axis is reversed on
/// every frame.
pub fn hflip<F: Scalar>(stack: &Tensor<F>, rng: &mut Rng, p: f64) -> Result<Tensor<F>> {
    if stack.rank() != 4 {
        return Err(Error::shape(
            "hflip",
            format!("expected [T, C, H, W], got {:?}", stack.dims()),
        ));
    }
    if !rng.bernoulli(p) {
        return Ok(stack.clone());
    }
    Ok(hflip_always(stack))
}

pub(crate) fn hflip_always<F: Scalar>(stack: &Tensor<F>) -> Tensor<F> {
    let w = stack.dims()[3];
    let rows = stack.len() / w;
    let mut out = stack.clone();
    let od = out.data_mut();
    for r in 0..rows {
        od[r * w..(r + 1) * w].reverse();
    }
    out
}

/// Constant per-channel subtraction; no variance scaling.
pub fn mean_subtract<F: Scalar>(stack: &Tensor<F>, means: &[F; 3]) -> Result<Tensor<F>> {
    if stack.rank() != 4 || stack.dims()[1] != 3 {
        return Err(Error::shape(
            "mean_subtract",
            format!("expected [T, 3, H, W], got {:?}", stack.dims()),
        ));
    }
    let (t_n, c_n) = (stack.dims()[0], stack.dims()[1]);
    let plane: usize = stack.dims()[2..].iter().product();
    let mut out = stack.clone();
    let od = out.data_mut();
    for t in 0..t_n {
        for c in 0..c_n {
            let base = (t * c_n + c) * plane;
            let m = means[c];
            for v in &mut od[base..base + plane] {
                *v = *v - m;
            }
        }
    }
    Ok(out)
}

/// Full chain: sample -> flip -> crop -> resize -> mean subtraction, then a
/// permute to the network's `[3, clip_len, out, out]` input order.
pub fn augment_clip<F: Scalar>(
    v: &Video<F>,
    policy: &AugmentPolicy<F>,
    rng: &mut Rng,
    mode: AugmentMode,
) -> Result<Tensor<F>> {
    policy.validate()?;
    let stack = match mode {
        AugmentMode::Train => sample_clip(v, policy.clip_len, rng)?,
        AugmentMode::Eval => center_clip(v, policy.clip_len)?,
    };
    let stack = match mode {
        AugmentMode::Train => hflip(&stack, rng, policy.flip_prob)?,
        AugmentMode::Eval => stack,
    };
    let (position, scale) = match mode {
        AugmentMode::Train => {
            let position = CROP_POSITIONS[rng.range(CROP_POSITIONS.len())];
            let scale = policy.scale_set[rng.range(policy.scale_set.len())];
            (position, scale)
        }
        AugmentMode::Eval => (CropPosition::Center, 1.0),
    };
    let stack = corner_crop(&stack, position, scale)?;
    let stack = resize_bilinear(&stack, policy.out_size)?;
    let stack = mean_subtract(&stack, &policy.channel_means)?;
    Ok(channels_first(&stack))
}

/// `[T, C, H, W] -> [C, T, H, W]` as whole-plane copies.
fn channels_first<F: Scalar>(stack: &Tensor<F>) -> Tensor<F> {
    let (t_n, c_n) = (stack.dims()[0], stack.dims()[1]);
    let plane: usize = stack.dims()[2..].iter().product();
    let mut out = Tensor::zeros(&[c_n, t_n, stack.dims()[2], stack.dims()[3]])
        .expect("permuted dims valid");
    let od = out.data_mut();
    let xd = stack.data();
    for t in 0..t_n {
        for c in 0..c_n {
            let src = (t * c_n + c) * plane;
            let dst = (c * t_n + t) * plane;
            od[dst..dst + plane].copy_from_slice(&xd[src..src + plane]);
        }
    }
    out
}
