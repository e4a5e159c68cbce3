//! Residual blocks in the genres the depth presets are assembled from:
//! basic, bottleneck, wide (basic plan with widened channels), pre-activation
//! and a simplified dense-transition block.
//!
//! A 1x1x1 projection is inserted on the skip path whenever the channel
//! counts or strides of the two branches disagree.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::batchnorm::{batchnorm3d_eval, BatchNorm3dParams};
use super::conv3d::{conv3d_forward, Conv3dParams};
use super::init::{activation_gain, he_normal};
use super::pool::{pool3d_forward, PoolKind};
use super::prelu::prelu_forward;
use super::tape::{NodeId, ParamId, Params, Tape};

pub const PRELU_INIT_SLOPE: f64 = 0.25;
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Genre {
    Basic,
    Bottleneck,
    Wide,
    Preact,
    DenseTransition,
}

impl Genre {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "basic" => Ok(Genre::Basic),
            "bottleneck" => Ok(Genre::Bottleneck),
            "wide" => Ok(Genre::Wide),
            "preact" => Ok(Genre::Preact),
            "dense-transition" => Ok(Genre::DenseTransition),
            other => Err(Error::Config(format!("unknown block genre '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Genre::Basic => "basic",
            Genre::Bottleneck => "bottleneck",
            Genre::Wide => "wide",
            Genre::Preact => "preact",
            Genre::DenseTransition => "dense-transition",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Prelu,
    Relu,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "prelu" => Ok(Activation::Prelu),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Prelu => "prelu",
            Activation::Relu => "relu",
        }
    }

    pub fn negative_slope(&self) -> f64 {
        match self {
            Activation::Prelu => PRELU_INIT_SLOPE,
            Activation::Relu => 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockSpec {
    pub genre: Genre,
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: [usize; 3],
    pub activation: Activation,
}

#[derive(Debug, Clone)]
struct ConvUnit {
    w: ParamId,
    stride: [usize; 3],
    padding: [usize; 3],
}

#[derive(Debug, Clone)]
struct BnUnit {
    gamma: ParamId,
    beta: ParamId,
    rmean: ParamId,
    rvar: ParamId,
}

#[derive(Debug, Clone)]
enum ActUnit {
    Prelu(ParamId),
    Relu,
}

#[derive(Debug)]
enum Layout {
    /// conv-bn-act-conv-bn (+ projected skip), activation after the join.
    Basic {
        conv1: ConvUnit,
        bn1: BnUnit,
        act1: ActUnit,
        conv2: ConvUnit,
        bn2: BnUnit,
        proj: Option<(ConvUnit, BnUnit)>,
        act_out: ActUnit,
    },
    /// 1x1 reduce, 3x3 spatial (carries the stride), 1x1 expand.
    Bottleneck {
        conv1: ConvUnit,
        bn1: BnUnit,
        act1: ActUnit,
        conv2: ConvUnit,
        bn2: BnUnit,
        act2: ActUnit,
        conv3: ConvUnit,
        bn3: BnUnit,
        proj: Option<(ConvUnit, BnUnit)>,
        act_out: ActUnit,
    },
    /// bn-act-conv twice, no activation after the join.
    Preact {
        bn1: BnUnit,
        act1: ActUnit,
        conv1: ConvUnit,
        bn2: BnUnit,
        act2: ActUnit,
        conv2: ConvUnit,
        proj: Option<ConvUnit>,
    },
    /// Grow features, concatenate with the (subsampled) input, 1x1 transition.
    Dense {
        bn1: BnUnit,
        act1: ActUnit,
        grow: ConvUnit,
        trans: ConvUnit,
        bn2: BnUnit,
        act2: ActUnit,
        subsample: bool,
    },
}

#[derive(Debug)]
pub struct Block<F: Scalar> {
    pub spec: BlockSpec,
    layout: Layout,
    momentum: F,
    eps: F,
}

fn push_conv<F: Scalar>(
    store: &mut Params<F>,
    rng: &mut Rng,
    name: String,
    out_ch: usize,
    in_ch: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    gain: f64,
) -> Result<ConvUnit> {
    let fan_in = in_ch * kernel[0] * kernel[1] * kernel[2];
    let w = he_normal(
        rng,
        &[out_ch, in_ch, kernel[0], kernel[1], kernel[2]],
        fan_in,
        gain,
    )?;
    Ok(ConvUnit {
        w: store.push(name, w, true),
        stride,
        padding,
    })
}

fn push_bn<F: Scalar>(store: &mut Params<F>, prefix: &str, channels: usize) -> Result<BnUnit> {
    Ok(BnUnit {
        gamma: store.push(format!("{prefix}.gamma"), Tensor::ones(&[channels])?, true),
        beta: store.push(format!("{prefix}.beta"), Tensor::zeros(&[channels])?, true),
        rmean: store.push(
            format!("{prefix}.running_mean"),
            Tensor::zeros(&[channels])?,
            false,
        ),
        rvar: store.push(
            format!("{prefix}.running_var"),
            Tensor::ones(&[channels])?,
            false,
        ),
    })
}

fn push_act<F: Scalar>(
    store: &mut Params<F>,
    prefix: &str,
    act: Activation,
    channels: usize,
) -> Result<ActUnit> {
    match act {
        Activation::Relu => Ok(ActUnit::Relu),
        Activation::Prelu => {
            let slope = Tensor::full(&[channels], F::of_f64(PRELU_INIT_SLOPE))?;
            Ok(ActUnit::Prelu(
                store.push(format!("{prefix}.slope"), slope, true),
            ))
        }
    }
}

impl<F: Scalar> Block<F> {
    pub fn build(
        spec: BlockSpec,
        store: &mut Params<F>,
        rng: &mut Rng,
        prefix: &str,
    ) -> Result<Self> {
        if spec.in_channels == 0 || spec.out_channels == 0 {
            return Err(Error::Config(format!(
                "block {prefix}: channel plan {} -> {} is impossible",
                spec.in_channels, spec.out_channels
            )));
        }
        if spec.stride.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "block {prefix}: stride {:?} must be >= 1",
                spec.stride
            )));
        }
        let gain = activation_gain(spec.activation.negative_slope());
        let needs_proj = spec.in_channels != spec.out_channels || spec.stride != [1, 1, 1];
        let (inc, outc, s) = (spec.in_channels, spec.out_channels, spec.stride);
        let k3 = [3, 3, 3];
        let p1 = [1, 1, 1];
        let s1 = [1, 1, 1];
        let layout = match spec.genre {
            Genre::Basic | Genre::Wide => Layout::Basic {
                conv1: push_conv(store, rng, format!("{prefix}.conv1.w"), outc, inc, k3, s, p1, gain)?,
                bn1: push_bn(store, &format!("{prefix}.bn1"), outc)?,
                act1: push_act(store, &format!("{prefix}.act1"), spec.activation, outc)?,
                conv2: push_conv(store, rng, format!("{prefix}.conv2.w"), outc, outc, k3, s1, p1, gain)?,
                bn2: push_bn(store, &format!("{prefix}.bn2"), outc)?,
                proj: if needs_proj {
                    Some((
                        push_conv(
                            store,
                            rng,
                            format!("{prefix}.proj.w"),
                            outc,
                            inc,
                            [1, 1, 1],
                            s,
                            [0, 0, 0],
                            1.0,
                        )?,
                        push_bn(store, &format!("{prefix}.proj_bn"), outc)?,
                    ))
                } else {
                    None
                },
                act_out: push_act(store, &format!("{prefix}.act_out"), spec.activation, outc)?,
            },
            Genre::Bottleneck => {
                if outc % 4 != 0 || outc < 4 {
                    return Err(Error::Config(format!(
                        "block {prefix}: bottleneck output channels {outc} must be a positive multiple of 4"
                    )));
                }
                let mid = outc / 4;
                Layout::Bottleneck {
                    conv1: push_conv(store, rng, format!("{prefix}.conv1.w"), mid, inc, [1, 1, 1], s1, [0, 0, 0], gain)?,
                    bn1: push_bn(store, &format!("{prefix}.bn1"), mid)?,
                    act1: push_act(store, &format!("{prefix}.act1"), spec.activation, mid)?,
                    conv2: push_conv(store, rng, format!("{prefix}.conv2.w"), mid, mid, k3, s, p1, gain)?,
                    bn2: push_bn(store, &format!("{prefix}.bn2"), mid)?,
                    act2: push_act(store, &format!("{prefix}.act2"), spec.activation, mid)?,
                    conv3: push_conv(store, rng, format!("{prefix}.conv3.w"), outc, mid, [1, 1, 1], s1, [0, 0, 0], gain)?,
                    bn3: push_bn(store, &format!("{prefix}.bn3"), outc)?,
                    proj: if needs_proj {
                        Some((
                            push_conv(
                                store,
                                rng,
                                format!("{prefix}.proj.w"),
                                outc,
                                inc,
                                [1, 1, 1],
                                s,
                                [0, 0, 0],
                                1.0,
                            )?,
                            push_bn(store, &format!("{prefix}.proj_bn"), outc)?,
                        ))
                    } else {
                        None
                    },
                    act_out: push_act(store, &format!("{prefix}.act_out"), spec.activation, outc)?,
                }
            }
            Genre::Preact => Layout::Preact {
                bn1: push_bn(store, &format!("{prefix}.bn1"), inc)?,
                act1: push_act(store, &format!("{prefix}.act1"), spec.activation, inc)?,
                conv1: push_conv(store, rng, format!("{prefix}.conv1.w"), outc, inc, k3, s, p1, gain)?,
                bn2: push_bn(store, &format!("{prefix}.bn2"), outc)?,
                act2: push_act(store, &format!("{prefix}.act2"), spec.activation, outc)?,
                conv2: push_conv(store, rng, format!("{prefix}.conv2.w"), outc, outc, k3, s1, p1, gain)?,
                proj: if needs_proj {
                    Some(push_conv(
                        store,
                        rng,
                        format!("{prefix}.proj.w"),
                        outc,
                        inc,
                        [1, 1, 1],
                        s,
                        [0, 0, 0],
                        1.0,
                    )?)
                } else {
                    None
                },
            },
            Genre::DenseTransition => {
                if outc < 2 {
                    return Err(Error::Config(format!(
                        "block {prefix}: dense-transition needs at least 2 output channels, got {outc}"
                    )));
                }
                let growth = outc / 2;
                Layout::Dense {
                    bn1: push_bn(store, &format!("{prefix}.bn1"), inc)?,
                    act1: push_act(store, &format!("{prefix}.act1"), spec.activation, inc)?,
                    grow: push_conv(store, rng, format!("{prefix}.grow.w"), growth, inc, k3, s, p1, gain)?,
                    trans: push_conv(
                        store,
                        rng,
                        format!("{prefix}.trans.w"),
                        outc,
                        inc + growth,
                        [1, 1, 1],
                        s1,
                        [0, 0, 0],
                        gain,
                    )?,
                    bn2: push_bn(store, &format!("{prefix}.bn2"), outc)?,
                    act2: push_act(store, &format!("{prefix}.act2"), spec.activation, outc)?,
                    subsample: s != [1, 1, 1],
                }
            }
        };
        Ok(Block {
            spec,
            layout,
            momentum: F::of_f64(BN_MOMENTUM),
            eps: F::of_f64(BN_EPS),
        })
    }

    fn tape_act(
        &self,
        tape: &mut Tape<F>,
        store: &Params<F>,
        act: &ActUnit,
        x: NodeId,
    ) -> Result<NodeId> {
        match act {
            ActUnit::Relu => tape.relu(x),
            ActUnit::Prelu(slope) => tape.prelu(store, x, *slope),
        }
    }

    fn tape_bn(
        &self,
        tape: &mut Tape<F>,
        store: &mut Params<F>,
        bn: &BnUnit,
        x: NodeId,
    ) -> Result<NodeId> {
        tape.batchnorm(
            store,
            x,
            bn.gamma,
            bn.beta,
            bn.rmean,
            bn.rvar,
            self.momentum,
            self.eps,
        )
    }

    pub fn forward_train(
        &self,
        tape: &mut Tape<F>,
        store: &mut Params<F>,
        x: NodeId,
    ) -> Result<NodeId> {
        match &self.layout {
            Layout::Basic {
                conv1,
                bn1,
                act1,
                conv2,
                bn2,
                proj,
                act_out,
            } => {
                let mut h = tape.conv3d(store, x, conv1.w, None, conv1.stride, conv1.padding)?;
                h = self.tape_bn(tape, store, bn1, h)?;
                h = self.tape_act(tape, store, act1, h)?;
                h = tape.conv3d(store, h, conv2.w, None, conv2.stride, conv2.padding)?;
                h = self.tape_bn(tape, store, bn2, h)?;
                let skip = match proj {
                    Some((c, bn)) => {
                        let s = tape.conv3d(store, x, c.w, None, c.stride, c.padding)?;
                        self.tape_bn(tape, store, bn, s)?
                    }
                    None => x,
                };
                let sum = tape.add(h, skip)?;
                self.tape_act(tape, store, act_out, sum)
            }
            Layout::Bottleneck {
                conv1,
                bn1,
                act1,
                conv2,
                bn2,
                act2,
                conv3,
                bn3,
                proj,
                act_out,
            } => {
                let mut h = tape.conv3d(store, x, conv1.w, None, conv1.stride, conv1.padding)?;
                h = self.tape_bn(tape, store, bn1, h)?;
                h = self.tape_act(tape, store, act1, h)?;
                h = tape.conv3d(store, h, conv2.w, None, conv2.stride, conv2.padding)?;
                h = self.tape_bn(tape, store, bn2, h)?;
                h = self.tape_act(tape, store, act2, h)?;
                h = tape.conv3d(store, h, conv3.w, None, conv3.stride, conv3.padding)?;
                h = self.tape_bn(tape, store, bn3, h)?;
                let skip = match proj {
                    Some((c, bn)) => {
                        let s = tape.conv3d(store, x, c.w, None, c.stride, c.padding)?;
                        self.tape_bn(tape, store, bn, s)?
                    }
                    None => x,
                };
                let sum = tape.add(h, skip)?;
                self.tape_act(tape, store, act_out, sum)
            }
            Layout::Preact {
                bn1,
                act1,
                conv1,
                bn2,
                act2,
                conv2,
                proj,
            } => {
                let mut h = self.tape_bn(tape, store, bn1, x)?;
                h = self.tape_act(tape, store, act1, h)?;
                h = tape.conv3d(store, h, conv1.w, None, conv1.stride, conv1.padding)?;
                h = self.tape_bn(tape, store, bn2, h)?;
                h = self.tape_act(tape, store, act2, h)?;
                h = tape.conv3d(store, h, conv2.w, None, conv2.stride, conv2.padding)?;
                let skip = match proj {
                    Some(c) => tape.conv3d(store, x, c.w, None, c.stride, c.padding)?,
                    None => x,
                };
                tape.add(h, skip)
            }
            Layout::Dense {
                bn1,
                act1,
                grow,
                trans,
                bn2,
                act2,
                subsample,
            } => {
                let mut h = self.tape_bn(tape, store, bn1, x)?;
                h = self.tape_act(tape, store, act1, h)?;
                h = tape.conv3d(store, h, grow.w, None, grow.stride, grow.padding)?;
                let carried = if *subsample {
                    tape.pool(x, PoolKind::Avg, [1, 1, 1], self.spec.stride, [0, 0, 0])?
                } else {
                    x
                };
                let cat = tape.concat_channels(carried, h)?;
                let mut out =
                    tape.conv3d(store, cat, trans.w, None, trans.stride, trans.padding)?;
                out = self.tape_bn(tape, store, bn2, out)?;
                self.tape_act(tape, store, act2, out)
            }
        }
    }

    fn eval_conv(&self, store: &Params<F>, c: &ConvUnit, x: &Tensor<F>) -> Result<Tensor<F>> {
        let p = Conv3dParams::new(store.value(c.w).clone(), None, c.stride, c.padding)?;
        conv3d_forward(x, &p)
    }

    fn eval_bn(&self, store: &Params<F>, bn: &BnUnit, x: &Tensor<F>) -> Result<Tensor<F>> {
        let p = BatchNorm3dParams {
            gamma: store.value(bn.gamma).clone(),
            beta: store.value(bn.beta).clone(),
            running_mean: store.value(bn.rmean).clone(),
            running_var: store.value(bn.rvar).clone(),
            momentum: self.momentum,
            eps: self.eps,
        };
        batchnorm3d_eval(x, &p)
    }

    fn eval_act(&self, store: &Params<F>, act: &ActUnit, x: &Tensor<F>) -> Result<Tensor<F>> {
        match act {
            ActUnit::Relu => Ok(x.map(|v| if v > F::zero() { v } else { F::zero() })),
            ActUnit::Prelu(slope) => prelu_forward(x, store.value(*slope)),
        }
    }

    pub fn forward_eval(&self, store: &Params<F>, x: &Tensor<F>) -> Result<Tensor<F>> {
        match &self.layout {
            Layout::Basic {
                conv1,
                bn1,
                act1,
                conv2,
                bn2,
                proj,
                act_out,
            } => {
                let mut h = self.eval_conv(store, conv1, x)?;
                h = self.eval_bn(store, bn1, &h)?;
                h = self.eval_act(store, act1, &h)?;
                h = self.eval_conv(store, conv2, &h)?;
                h = self.eval_bn(store, bn2, &h)?;
                let skip = match proj {
                    Some((c, bn)) => {
                        let s = self.eval_conv(store, c, x)?;
                        self.eval_bn(store, bn, &s)?
                    }
                    None => x.clone(),
                };
                self.eval_act(store, act_out, &h.add(&skip)?)
            }
            Layout::Bottleneck {
                conv1,
                bn1,
                act1,
                conv2,
                bn2,
                act2,
                conv3,
                bn3,
                proj,
                act_out,
            } => {
                let mut h = self.eval_conv(store, conv1, x)?;
                h = self.eval_bn(store, bn1, &h)?;
                h = self.eval_act(store, act1, &h)?;
                h = self.eval_conv(store, conv2, &h)?;
                h = self.eval_bn(store, bn2, &h)?;
                h = self.eval_act(store, act2, &h)?;
                h = self.eval_conv(store, conv3, &h)?;
                h = self.eval_bn(store, bn3, &h)?;
                let skip = match proj {
                    Some((c, bn)) => {
                        let s = self.eval_conv(store, c, x)?;
                        self.eval_bn(store, bn, &s)?
                    }
                    None => x.clone(),
                };
                self.eval_act(store, act_out, &h.add(&skip)?)
            }
            Layout::Preact {
                bn1,
                act1,
                conv1,
                bn2,
                act2,
                conv2,
                proj,
            } => {
                let mut h = self.eval_bn(store, bn1, x)?;
                h = self.eval_act(store, act1, &h)?;
                h = self.eval_conv(store, conv1, &h)?;
                h = self.eval_bn(store, bn2, &h)?;
                h = self.eval_act(store, act2, &h)?;
                h = self.eval_conv(store, conv2, &h)?;
                let skip = match proj {
                    Some(c) => self.eval_conv(store, c, x)?,
                    None => x.clone(),
                };
                h.add(&skip)
            }
            Layout::Dense {
                bn1,
                act1,
                grow,
                trans,
                bn2,
                act2,
                subsample,
            } => {
                let mut h = self.eval_bn(store, bn1, x)?;
                h = self.eval_act(store, act1, &h)?;
                h = self.eval_conv(store, grow, &h)?;
                let carried = if *subsample {
                    pool3d_forward(x, PoolKind::Avg, [1, 1, 1], self.spec.stride, [0, 0, 0])?.out
                } else {
                    x.clone()
                };
                let cat = concat_channels_eval(&carried, &h)?;
                let mut out = self.eval_conv(store, trans, &cat)?;
                out = self.eval_bn(store, bn2, &out)?;
                self.eval_act(store, act2, &out)
            }
        }
    }

    /// Zero every trainable parameter on the main path (tests use this to
    /// isolate the skip connection).
    pub fn zero_main_path(&self, store: &mut Params<F>) {
        let ids: Vec<ParamId> = match &self.layout {
            Layout::Basic {
                conv1, conv2, bn1, bn2, ..
            } => vec![conv1.w, conv2.w, bn1.gamma, bn2.gamma],
            Layout::Bottleneck {
                conv1,
                conv2,
                conv3,
                bn1,
                bn2,
                bn3,
                ..
            } => vec![conv1.w, conv2.w, conv3.w, bn1.gamma, bn2.gamma, bn3.gamma],
            Layout::Preact { conv1, conv2, .. } => vec![conv1.w, conv2.w],
            Layout::Dense { grow, trans, .. } => vec![grow.w, trans.w],
        };
        for id in ids {
            store.value_mut(id).fill(F::zero());
        }
    }
}

pub(crate) fn concat_channels_eval<F: Scalar>(
    a: &Tensor<F>,
    b: &Tensor<F>,
) -> Result<Tensor<F>> {
    if a.rank() != 5 || b.rank() != 5 || a.dims()[0] != b.dims()[0] || a.dims()[2..] != b.dims()[2..]
    {
        return Err(Error::shape(
            "concat_channels",
            format!("cannot concat {:?} with {:?}", a.dims(), b.dims()),
        ));
    }
    let (b_n, ca, cb) = (a.dims()[0], a.dims()[1], b.dims()[1]);
    let inner: usize = a.dims()[2..].iter().product();
    let mut dims = a.dims().to_vec();
    dims[1] = ca + cb;
    let mut out = Tensor::zeros(&dims)?;
    let od = out.data_mut();
    for bi in 0..b_n {
        let dst = bi * (ca + cb) * inner;
        od[dst..dst + ca * inner].copy_from_slice(&a.data()[bi * ca * inner..(bi + 1) * ca * inner]);
        od[dst + ca * inner..dst + (ca + cb) * inner]
            .copy_from_slice(&b.data()[bi * cb * inner..(bi + 1) * cb * inner]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::probe_gradient;

    fn spec(genre: Genre, inc: usize, outc: usize, stride: usize) -> BlockSpec {
        BlockSpec {
            genre,
            in_channels: inc,
            out_channels: outc,
            stride: [stride; 3],
            activation: Activation::Prelu,
        }
    }

    #[test]
    fn zeroed_main_path_reduces_to_activated_skip() {
        let mut store: Params<f64> = Params::new();
        let mut rng = Rng::new(7);
        let block = Block::build(spec(Genre::Basic, 4, 4, 1), &mut store, &mut rng, "b").unwrap();
        block.zero_main_path(&mut store);
        let x: Tensor<f64> = rng.normal(&[2, 4, 2, 4, 4], 0.0, 1.0).unwrap();
        let mut tape = Tape::new();
        let xid = tape.input(x.clone());
        let y = block.forward_train(&mut tape, &mut store, xid).unwrap();
        // main path contributes exactly zero, so out = prelu(x + 0)
        let slope = 0.25;
        for (o, &i) in tape.value(y).iter().zip(x.data()) {
            let want = if i > 0.0 { i } else { slope * i };
            assert!((o - want).abs() < 1e-12, "{o} vs {want}");
        }
    }

    #[test]
    fn argmax_of_channel_means_survives_zero_main_path() {
        let mut store: Params<f64> = Params::new();
        let mut rng = Rng::new(19);
        let block = Block::build(spec(Genre::Basic, 3, 3, 1), &mut store, &mut rng, "b").unwrap();
        block.zero_main_path(&mut store);
        let x: Tensor<f64> = rng.normal(&[1, 3, 2, 4, 4], 0.5, 1.0).unwrap();
        let y = block.forward_eval(&store, &x).unwrap();
        let inner = 2 * 4 * 4;
        let channel_mean = |t: &Tensor<f64>, c: usize| -> f64 {
            t.data()[c * inner..(c + 1) * inner].iter().sum::<f64>() / inner as f64
        };
        let arg_x = (0..3)
            .map(|c| channel_mean(&x, c))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        let arg_y = (0..3)
            .map(|c| channel_mean(&y, c))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0;
        assert_eq!(arg_x, arg_y);
    }

    #[test]
    fn stride_two_halves_spatial_extents() {
        for genre in [
            Genre::Basic,
            Genre::Bottleneck,
            Genre::Preact,
            Genre::DenseTransition,
        ] {
            let mut store: Params<f32> = Params::new();
            let mut rng = Rng::new(3);
            let block = Block::build(spec(genre, 4, 8, 2), &mut store, &mut rng, "b").unwrap();
            let x = Tensor::<f32>::ones(&[1, 4, 4, 8, 8]).unwrap();
            let y = block.forward_eval(&store, &x).unwrap();
            assert_eq!(y.dims(), &[1, 8, 2, 4, 4], "{genre:?}");
        }
    }

    #[test]
    fn bottleneck_rejects_impossible_plan() {
        let mut store: Params<f32> = Params::new();
        let mut rng = Rng::new(3);
        let err = Block::build(spec(Genre::Bottleneck, 4, 6, 1), &mut store, &mut rng, "b")
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn every_genre_backward_matches_finite_differences() {
        for genre in [
            Genre::Basic,
            Genre::Bottleneck,
            Genre::Preact,
            Genre::DenseTransition,
        ] {
            let mut store: Params<f64> = Params::new();
            let mut rng = Rng::new(37);
            let block =
                Block::build(spec(genre, 2, 4, 2), &mut store, &mut rng, "b").unwrap();
            let x: Tensor<f64> = rng.normal(&[2, 2, 3, 6, 6], 0.0, 1.0).unwrap();

            let mut tape = Tape::new();
            let xid = tape.input(x.clone());
            let y = block.forward_train(&mut tape, &mut store, xid).unwrap();
            let v: Tensor<f64> = Rng::new(2).normal(tape.value(y).dims(), 0.0, 1.0).unwrap();
            // snapshot running stats so FD re-runs see the same starting state
            let frozen = store.clone();
            let grads = tape.backward(&mut store, y, v.clone()).unwrap();
            let gx = grads[0].clone().unwrap();

            let mut f = |t: &Tensor<f64>| {
                let mut store2 = frozen.clone();
                let mut tape2 = Tape::new();
                let xid2 = tape2.input(t.clone());
                let y2 = block.forward_train(&mut tape2, &mut store2, xid2).unwrap();
                Ok(tape2
                    .value(y2)
                    .data()
                    .iter()
                    .zip(v.data())
                    .map(|(a, c)| a * c)
                    .sum())
            };
            let mut rng_p = Rng::new(5);
            let err = probe_gradient(&mut f, &x, &gx, 48, &mut rng_p).unwrap().max_rel_err;
            assert!(err <= 1e-3, "{genre:?} input grad err {err}");

            // spot-check one weight tensor per genre in f64 at the tight tolerance
            let wid = store.find("b.conv1.w").or(store.find("b.grow.w")).unwrap();
            let wval = frozen.value(wid).clone();
            let mut fw = |t: &Tensor<f64>| {
                let mut store2 = frozen.clone();
                *store2.value_mut(wid) = t.clone();
                let mut tape2 = Tape::new();
                let xid2 = tape2.input(x.clone());
                let y2 = block.forward_train(&mut tape2, &mut store2, xid2).unwrap();
                Ok(tape2
                    .value(y2)
                    .data()
                    .iter()
                    .zip(v.data())
                    .map(|(a, c)| a * c)
                    .sum())
            };
            let errw = probe_gradient(&mut fw, &wval, store.grad(wid), 32, &mut rng_p)
                .unwrap()
                .max_rel_err;
            assert!(errw <= 1e-5, "{genre:?} weight grad err {errw}");
        }
    }
}
