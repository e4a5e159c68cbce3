//! Model assembly: 3D residual feature extractors of configurable depth and
//! genre, wired to either loss head.
//!
//! Desk presets are scaled-down analogs (narrow widths, an aggressive stem)
//! that train on a single CPU; full presets mirror the standard published
//! depth plans and are constructible for shape and parameter-count checks.

use crate::error::{Error, Result};
use crate::loss::ClassifierWeights;
use crate::nn::batchnorm::{batchnorm3d_eval, BatchNorm3dParams};
use crate::nn::conv3d::{conv3d_forward, Conv3dParams};
use crate::nn::init::{activation_gain, he_normal};
use crate::nn::linear::linear_forward;
use crate::nn::pool::{global_avg_pool, pool3d_forward, PoolKind};
use crate::nn::prelu::prelu_forward;
use crate::nn::residual::{Activation, Block, BlockSpec, Genre, BN_EPS, BN_MOMENTUM, PRELU_INIT_SLOPE};
use crate::nn::tape::{NodeId, ParamId, Params, Tape};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Nominal clip geometry the model is built for: `[B, 3, t, hw, hw]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipDims {
    pub t: usize,
    pub hw: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Angular,
    CrossEntropy,
}

impl HeadKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "asoftmax" => Ok(HeadKind::Angular),
            "cross_entropy" => Ok(HeadKind::CrossEntropy),
            other => Err(Error::Config(format!(
                "unknown loss '{other}' (expected asoftmax or cross_entropy)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::Angular => "asoftmax",
            HeadKind::CrossEntropy => "cross_entropy",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub preset: String,
    pub genre: Genre,
    pub stage_blocks: Vec<usize>,
    pub base_width: usize,
    pub widen: usize,
    pub activation: Activation,
    pub embed_dim: usize,
    pub num_classes: usize,
    pub head: HeadKind,
    pub input: ClipDims,
    pub stem_kernel: [usize; 3],
    pub stem_stride: [usize; 3],
    pub stem_padding: [usize; 3],
    /// Max-pool after the stem: (window, stride, padding).
    pub stem_pool: Option<([usize; 3], [usize; 3], [usize; 3])>,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stage_blocks.is_empty() || self.stage_blocks.contains(&0) {
            return Err(Error::Config(format!(
                "stage plan {:?} needs at least one block per stage",
                self.stage_blocks
            )));
        }
        if self.embed_dim < 2 {
            return Err(Error::Config(format!(
                "embedding dimension must be at least 2, got {}",
                self.embed_dim
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config(format!(
                "model needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.base_width == 0 || self.widen == 0 {
            return Err(Error::Config(
                "base width and widen factor must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Output channels of stage `i`.
    fn stage_channels(&self, stage: usize) -> usize {
        let expansion = if self.genre == Genre::Bottleneck { 4 } else { 1 };
        self.base_width * (1 << stage) * self.widen * expansion
    }

    fn stem_channels(&self) -> usize {
        self.base_width * self.widen
    }
}

/// Known preset names, part of the CLI contract.
pub const PRESETS: [&str; 14] = [
    "desk-resnet10-basic",
    "desk-resnet18-basic",
    "desk-resnet10-bottleneck",
    "desk-resnet10-preact",
    "desk-resnet10-dense",
    "desk-wideresnet10",
    "resnet18-basic",
    "resnet34-basic",
    "resnet50-bottleneck",
    "resnet101-bottleneck",
    "resnet152-bottleneck",
    "preact-resnet200",
    "wideresnet50",
    "densenet-analog",
];

/// Build the configuration for a named preset. `num_classes` comes from the
/// dataset at train time.
pub fn preset(name: &str, num_classes: usize) -> Result<ModelConfig> {
    let desk = |genre: Genre, blocks: Vec<usize>, widen: usize| ModelConfig {
        preset: name.to_string(),
        genre,
        stage_blocks: blocks,
        base_width: 8,
        widen,
        activation: Activation::Prelu,
        embed_dim: 64,
        num_classes,
        head: HeadKind::Angular,
        input: ClipDims { t: 16, hw: 112 },
        stem_kernel: [3, 5, 5],
        stem_stride: [2, 4, 4],
        stem_padding: [1, 2, 2],
        stem_pool: Some(([3, 3, 3], [2, 2, 2], [1, 1, 1])),
    };
    let full = |genre: Genre, blocks: Vec<usize>, widen: usize| ModelConfig {
        preset: name.to_string(),
        genre,
        stage_blocks: blocks,
        base_width: 64,
        widen,
        activation: Activation::Prelu,
        embed_dim: 512,
        num_classes,
        head: HeadKind::Angular,
        input: ClipDims { t: 16, hw: 112 },
        stem_kernel: [3, 7, 7],
        stem_stride: [1, 2, 2],
        stem_padding: [1, 3, 3],
        stem_pool: Some(([3, 3, 3], [2, 2, 2], [1, 1, 1])),
    };
    let cfg = match name {
        "desk-resnet10-basic" => desk(Genre::Basic, vec![1, 1, 1, 1], 1),
        "desk-resnet18-basic" => desk(Genre::Basic, vec![2, 2, 2, 2], 1),
        "desk-resnet10-bottleneck" => desk(Genre::Bottleneck, vec![1, 1, 1, 1], 1),
        "desk-resnet10-preact" => desk(Genre::Preact, vec![1, 1, 1, 1], 1),
        "desk-resnet10-dense" => desk(Genre::DenseTransition, vec![1, 1, 1, 1], 1),
        "desk-wideresnet10" => desk(Genre::Wide, vec![1, 1, 1, 1], 2),
        "resnet18-basic" => full(Genre::Basic, vec![2, 2, 2, 2], 1),
        "resnet34-basic" => full(Genre::Basic, vec![3, 4, 6, 3], 1),
        "resnet50-bottleneck" => full(Genre::Bottleneck, vec![3, 4, 6, 3], 1),
        "resnet101-bottleneck" => full(Genre::Bottleneck, vec![3, 4, 23, 3], 1),
        "resnet152-bottleneck" => full(Genre::Bottleneck, vec![3, 8, 36, 3], 1),
        "preact-resnet200" => full(Genre::Preact, vec![3, 24, 36, 3], 1),
        "wideresnet50" => full(Genre::Wide, vec![3, 4, 6, 3], 2),
        "densenet-analog" => full(Genre::DenseTransition, vec![2, 4, 8, 4], 1),
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}'; known presets: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(cfg)
}

#[derive(Debug)]
enum Head {
    Angular { w: ParamId },
    CrossEntropy { w: ParamId, b: ParamId },
}

#[derive(Debug)]
pub struct Model<F: Scalar> {
    pub cfg: ModelConfig,
    pub store: Params<F>,
    stem_w: ParamId,
    stem_bn: (ParamId, ParamId, ParamId, ParamId), // gamma, beta, rmean, rvar
    stem_slope: Option<ParamId>,
    stages: Vec<Vec<Block<F>>>,
    embed_w: ParamId,
    embed_b: ParamId,
    head: Head,
}

/// Deterministic architecture for a configuration and seed; shape-checked
/// end to end by a dry run on a one-clip dummy input.
pub fn build_model<F: Scalar>(cfg: &ModelConfig, seed: u64) -> Result<Model<F>> {
    cfg.validate()?;
    let mut store: Params<F> = Params::new();
    let mut rng = Rng::stream(&[seed, 0x494e4954]); // init stream

    let gain = activation_gain(cfg.activation.negative_slope());
    let stem_out = cfg.stem_channels();
    let fan_in = 3 * cfg.stem_kernel.iter().product::<usize>();
    let stem_w = store.push(
        "stem.conv.w",
        he_normal(
            &mut rng,
            &[
                stem_out,
                3,
                cfg.stem_kernel[0],
                cfg.stem_kernel[1],
                cfg.stem_kernel[2],
            ],
            fan_in,
            gain,
        )?,
        true,
    );
    let stem_bn = (
        store.push("stem.bn.gamma", Tensor::ones(&[stem_out])?, true),
        store.push("stem.bn.beta", Tensor::zeros(&[stem_out])?, true),
        store.push("stem.bn.running_mean", Tensor::zeros(&[stem_out])?, false),
        store.push("stem.bn.running_var", Tensor::ones(&[stem_out])?, false),
    );
    let stem_slope = match cfg.activation {
        Activation::Prelu => Some(store.push(
            "stem.act.slope",
            Tensor::full(&[stem_out], F::of_f64(PRELU_INIT_SLOPE))?,
            true,
        )),
        Activation::Relu => None,
    };

    let mut stages = Vec::new();
    let mut in_ch = stem_out;
    for (si, &count) in cfg.stage_blocks.iter().enumerate() {
        let out_ch = cfg.stage_channels(si);
        let mut blocks = Vec::new();
        for bi in 0..count {
            let stride = if si > 0 && bi == 0 { [2, 2, 2] } else { [1, 1, 1] };
            let spec = BlockSpec {
                genre: cfg.genre,
                in_channels: in_ch,
                out_channels: out_ch,
                stride,
                activation: cfg.activation,
            };
            blocks.push(Block::build(
                spec,
                &mut store,
                &mut rng,
                &format!("stage{}.block{}", si + 1, bi),
            )?);
            in_ch = out_ch;
        }
        stages.push(blocks);
    }

    let embed_w = store.push(
        "embed.w",
        he_normal(&mut rng, &[cfg.embed_dim, in_ch], in_ch, 1.0)?,
        true,
    );
    let embed_b = store.push("embed.b", Tensor::zeros(&[cfg.embed_dim])?, true);

    let head = match cfg.head {
        HeadKind::Angular => Head::Angular {
            w: store.push(
                "head.w",
                rng.normal(
                    &[cfg.num_classes, cfg.embed_dim],
                    F::zero(),
                    F::of_f64(1.0 / (cfg.embed_dim as f64).sqrt()),
                )?,
                true,
            ),
        },
        HeadKind::CrossEntropy => Head::CrossEntropy {
            w: store.push(
                "head.w",
                he_normal(
                    &mut rng,
                    &[cfg.num_classes, cfg.embed_dim],
                    cfg.embed_dim,
                    1.0,
                )?,
                true,
            ),
            b: store.push("head.b", Tensor::zeros(&[cfg.num_classes])?, true),
        },
    };

    let model = Model {
        cfg: cfg.clone(),
        store,
        stem_w,
        stem_bn,
        stem_slope,
        stages,
        embed_w,
        embed_b,
        head,
    };
    // dry run: one dummy clip through the eval path validates every shape
    let dummy = Tensor::zeros(&[1, 3, cfg.input.t, cfg.input.hw, cfg.input.hw])?;
    let (emb, logits) = model.forward_eval(&dummy)?;
    debug_assert_eq!(emb.dims(), &[1, cfg.embed_dim]);
    debug_assert_eq!(logits.dims(), &[1, cfg.num_classes]);
    Ok(model)
}

impl<F: Scalar> Model<F> {
    fn check_input(&self, clips: &Tensor<F>) -> Result<()> {
        let d = clips.dims();
        if d.len() != 5
            || d[1] != 3
            || d[2] != self.cfg.input.t
            || d[3] != self.cfg.input.hw
            || d[4] != self.cfg.input.hw
        {
            return Err(Error::shape(
                "model_forward",
                format!(
                    "clips {:?} do not match the stem input [B, 3, {}, {}, {}]",
                    d, self.cfg.input.t, self.cfg.input.hw, self.cfg.input.hw
                ),
            ));
        }
        Ok(())
    }

    /// Train-mode forward; returns the tape and the embedding node.
    pub fn forward_train(&mut self, clips: Tensor<F>) -> Result<(Tape<F>, NodeId)> {
        self.check_input(&clips)?;
        let mut tape = Tape::new();
        let x = tape.input(clips);
        let mut h = tape.conv3d(
            &self.store,
            x,
            self.stem_w,
            None,
            self.cfg.stem_stride,
            self.cfg.stem_padding,
        )?;
        let (gamma, beta, rmean, rvar) = self.stem_bn;
        h = tape.batchnorm(
            &mut self.store,
            h,
            gamma,
            beta,
            rmean,
            rvar,
            F::of_f64(BN_MOMENTUM),
            F::of_f64(BN_EPS),
        )?;
        h = match self.stem_slope {
            Some(slope) => tape.prelu(&self.store, h, slope)?,
            None => tape.relu(h)?,
        };
        if let Some((window, stride, pad)) = self.cfg.stem_pool {
            h = tape.pool(h, PoolKind::Max, window, stride, pad)?;
        }
        for stage in &self.stages {
            for block in stage {
                h = block.forward_train(&mut tape, &mut self.store, h)?;
            }
        }
        let pooled = tape.global_avg_pool(h)?;
        let emb = tape.linear(&self.store, pooled, self.embed_w, Some(self.embed_b))?;
        Ok((tape, emb))
    }

    /// Deterministic eval-mode forward: `(embeddings [B, D], logits [B, C])`.
    pub fn forward_eval(&self, clips: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        self.check_input(clips)?;
        let p = Conv3dParams::new(
            self.store.value(self.stem_w).clone(),
            None,
            self.cfg.stem_stride,
            self.cfg.stem_padding,
        )?;
        let mut h = conv3d_forward(clips, &p)?;
        let (gamma, beta, rmean, rvar) = self.stem_bn;
        let bn = BatchNorm3dParams {
            gamma: self.store.value(gamma).clone(),
            beta: self.store.value(beta).clone(),
            running_mean: self.store.value(rmean).clone(),
            running_var: self.store.value(rvar).clone(),
            momentum: F::of_f64(BN_MOMENTUM),
            eps: F::of_f64(BN_EPS),
        };
        h = batchnorm3d_eval(&h, &bn)?;
        h = match self.stem_slope {
            Some(slope) => prelu_forward(&h, self.store.value(slope))?,
            None => h.map(|v| if v > F::zero() { v } else { F::zero() }),
        };
        if let Some((window, stride, pad)) = self.cfg.stem_pool {
            h = pool3d_forward(&h, PoolKind::Max, window, stride, pad)?.out;
        }
        for stage in &self.stages {
            for block in stage {
                h = block.forward_eval(&self.store, &h)?;
            }
        }
        let pooled = global_avg_pool(&h)?;
        let emb = linear_forward(
            &pooled,
            self.store.value(self.embed_w),
            Some(self.store.value(self.embed_b)),
        )?;
        let logits = self.head_logits(&emb)?;
        Ok((emb, logits))
    }

    /// Margin-free logits of the configured head.
    pub fn head_logits(&self, embeddings: &Tensor<F>) -> Result<Tensor<F>> {
        match &self.head {
            Head::Angular { w } => {
                let weights = ClassifierWeights::new(self.store.value(*w).clone())?;
                let (unit, _) = weights.normalized()?;
                embeddings.matmul_nt(&unit)
            }
            Head::CrossEntropy { w, b } => linear_forward(
                embeddings,
                self.store.value(*w),
                Some(self.store.value(*b)),
            ),
        }
    }

    /// Parameter id of the head weight matrix `[C, D]`.
    pub fn head_weight(&self) -> ParamId {
        match &self.head {
            Head::Angular { w } => *w,
            Head::CrossEntropy { w, .. } => *w,
        }
    }

    pub fn head_bias(&self) -> Option<ParamId> {
        match &self.head {
            Head::Angular { .. } => None,
            Head::CrossEntropy { b, .. } => Some(*b),
        }
    }

    pub fn head_kind(&self) -> HeadKind {
        self.cfg.head
    }

    /// Predicted labels: argmax over classes of the head logits. For the
    /// angular head this equals the smallest feature-to-weight angle.
    pub fn predict(&self, clips: &Tensor<F>) -> Result<Vec<usize>> {
        let (_, logits) = self.forward_eval(clips)?;
        Ok(predict_from_logits(&logits))
    }

    /// Trainable scalar parameter count.
    pub fn param_count(&self) -> usize {
        self.store.trainable_len()
    }
}

/// Row-wise argmax, the label rule shared by both heads. A single-class
/// head degenerates to always predicting label 0.
pub fn predict_from_logits<F: Scalar>(logits: &Tensor<F>) -> Vec<usize> {
    (0..logits.dims()[0])
        .map(|i| {
            logits
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(j, _)| j)
                .unwrap_or(0)
        })
        .collect()
}
