//! Dynamic tape for reverse-mode differentiation at layer granularity.
//!
//! Ops execute eagerly during the forward pass and append a [`TapeNode`]
//! holding their input references and whatever the backward pass needs.
//! Construction order is execution order, so the recorded graph is acyclic
//! and walking nodes in reverse visits each one exactly once, after all of
//! its consumers.
//!
//! Parameters live in a [`Params`] store owned by the model; backward
//! accumulates parameter gradients there.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::batchnorm::{batchnorm3d_backward, batchnorm3d_forward, BatchNorm3dParams, BnBatchStats};
use super::conv3d::{conv3d_backward, conv3d_forward, conv3d_param_grads, Conv3dParams};
use super::linear::{linear_backward, linear_forward};
use super::pool::{
    global_avg_pool, global_avg_pool_backward, pool3d_backward, pool3d_forward, PoolKind,
};
use super::prelu::{prelu_backward, prelu_forward};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Named parameter store: values, gradient accumulators and a trainable flag
/// (batch-norm running statistics are stored here as non-trainable buffers so
/// they checkpoint alongside the weights).
#[derive(Debug, Clone)]
pub struct Params<F: Scalar> {
    names: Vec<String>,
    values: Vec<Tensor<F>>,
    grads: Vec<Tensor<F>>,
    trainable: Vec<bool>,
}

impl<F: Scalar> Params<F> {
    pub fn new() -> Self {
        Params {
            names: Vec::new(),
            values: Vec::new(),
            grads: Vec::new(),
            trainable: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Tensor<F>, trainable: bool) -> ParamId {
        let name = name.into();
        debug_assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        let grad = Tensor::zeros(value.dims()).expect("grad alloc");
        self.names.push(name);
        self.values.push(value);
        self.grads.push(grad);
        self.trainable.push(trainable);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<F> {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<F> {
        &self.grads[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        (0..self.values.len())
            .filter(|&i| self.trainable[i])
            .map(ParamId)
            .collect()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn accumulate_grad(&mut self, id: ParamId, g: &Tensor<F>) -> Result<()> {
        self.grads[id.0].add_in_place(g)
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(F::zero());
        }
    }

    /// Count of trainable scalar parameters.
    pub fn trainable_len(&self) -> usize {
        (0..self.values.len())
            .filter(|&i| self.trainable[i])
            .map(|i| self.values[i].len())
            .sum()
    }
}

impl<F: Scalar> Default for Params<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// One recorded operation: its inputs and the activations backward needs.
#[derive(Debug)]
pub enum TapeNode<F: Scalar> {
    Input,
    Conv3d {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
        stride: [usize; 3],
        padding: [usize; 3],
    },
    Prelu {
        x: NodeId,
        slope: ParamId,
    },
    Relu {
        x: NodeId,
    },
    BatchNorm {
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        stats: BnBatchStats<F>,
        eps: F,
    },
    Pool {
        x: NodeId,
        kind: PoolKind,
        window: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        argmax: Option<Vec<u32>>,
    },
    GlobalAvgPool {
        x: NodeId,
    },
    Linear {
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    },
    Add {
        a: NodeId,
        b: NodeId,
    },
    ConcatChannels {
        a: NodeId,
        b: NodeId,
    },
}

pub struct Tape<F: Scalar> {
    nodes: Vec<TapeNode<F>>,
    values: Vec<Tensor<F>>,
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor<F> {
        &self.values[id.0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn record(&mut self, node: TapeNode<F>, value: Tensor<F>) -> NodeId {
        self.nodes.push(node);
        self.values.push(value);
        NodeId(self.nodes.len() - 1)
    }

    pub fn input(&mut self, x: Tensor<F>) -> NodeId {
        self.record(TapeNode::Input, x)
    }

    pub fn conv3d(
        &mut self,
        store: &Params<F>,
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<NodeId> {
        let p = Conv3dParams::new(
            store.value(w).clone(),
            b.map(|id| store.value(id).clone()),
            stride,
            padding,
        )?;
        let y = conv3d_forward(self.value(x), &p)?;
        Ok(self.record(
            TapeNode::Conv3d {
                x,
                w,
                b,
                stride,
                padding,
            },
            y,
        ))
    }

    pub fn prelu(&mut self, store: &Params<F>, x: NodeId, slope: ParamId) -> Result<NodeId> {
        let y = prelu_forward(self.value(x), store.value(slope))?;
        Ok(self.record(TapeNode::Prelu { x, slope }, y))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let y = self.value(x).map(|v| if v > F::zero() { v } else { F::zero() });
        Ok(self.record(TapeNode::Relu { x }, y))
    }

    /// Train-mode batch norm; updates the running statistics in `store`.
    pub fn batchnorm(
        &mut self,
        store: &mut Params<F>,
        x: NodeId,
        gamma: ParamId,
        beta: ParamId,
        running_mean: ParamId,
        running_var: ParamId,
        momentum: F,
        eps: F,
    ) -> Result<NodeId> {
        let mut p = BatchNorm3dParams {
            gamma: store.value(gamma).clone(),
            beta: store.value(beta).clone(),
            running_mean: store.value(running_mean).clone(),
            running_var: store.value(running_var).clone(),
            momentum,
            eps,
        };
        let (y, stats) = batchnorm3d_forward(self.value(x), &mut p)?;
        *store.value_mut(running_mean) = p.running_mean;
        *store.value_mut(running_var) = p.running_var;
        Ok(self.record(
            TapeNode::BatchNorm {
                x,
                gamma,
                beta,
                stats,
                eps,
            },
            y,
        ))
    }

    pub fn pool(
        &mut self,
        x: NodeId,
        kind: PoolKind,
        window: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<NodeId> {
        let r = pool3d_forward(self.value(x), kind, window, stride, padding)?;
        Ok(self.record(
            TapeNode::Pool {
                x,
                kind,
                window,
                stride,
                padding,
                argmax: r.argmax,
            },
            r.out,
        ))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let y = global_avg_pool(self.value(x))?;
        Ok(self.record(TapeNode::GlobalAvgPool { x }, y))
    }

    pub fn linear(
        &mut self,
        store: &Params<F>,
        x: NodeId,
        w: ParamId,
        b: Option<ParamId>,
    ) -> Result<NodeId> {
        let y = linear_forward(self.value(x), store.value(w), b.map(|id| store.value(id)))?;
        Ok(self.record(TapeNode::Linear { x, w, b }, y))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).dims() != self.value(b).dims() {
            return Err(Error::shape(
                "residual_add",
                format!(
                    "branches disagree: {:?} vs {:?}",
                    self.value(a).dims(),
                    self.value(b).dims()
                ),
            ));
        }
        let y = self.value(a).add(self.value(b))?;
        Ok(self.record(TapeNode::Add { a, b }, y))
    }

    /// Concatenate along the channel axis of `[B, C, T, H, W]` values.
    pub fn concat_channels(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 5
            || vb.rank() != 5
            || va.dims()[0] != vb.dims()[0]
            || va.dims()[2..] != vb.dims()[2..]
        {
            return Err(Error::shape(
                "concat_channels",
                format!("cannot concat {:?} with {:?}", va.dims(), vb.dims()),
            ));
        }
        let (b_n, ca, cb) = (va.dims()[0], va.dims()[1], vb.dims()[1]);
        let inner: usize = va.dims()[2..].iter().product();
        let mut dims = va.dims().to_vec();
        dims[1] = ca + cb;
        let mut out = Tensor::zeros(&dims)?;
        let od = out.data_mut();
        for bi in 0..b_n {
            let dst = bi * (ca + cb) * inner;
            od[dst..dst + ca * inner]
                .copy_from_slice(&va.data()[bi * ca * inner..(bi + 1) * ca * inner]);
            od[dst + ca * inner..dst + (ca + cb) * inner]
                .copy_from_slice(&vb.data()[bi * cb * inner..(bi + 1) * cb * inner]);
        }
        Ok(self.record(TapeNode::ConcatChannels { a, b }, out))
    }

    /// Reverse pass from `seed` with gradient `seed_grad`. Parameter
    /// gradients accumulate into `store`; node gradients are returned so the
    /// caller can read the gradient at the input node.
    pub fn backward(
        &self,
        store: &mut Params<F>,
        seed: NodeId,
        seed_grad: Tensor<F>,
    ) -> Result<Vec<Option<Tensor<F>>>> {
        self.backward_impl(store, seed, seed_grad, true)
    }

    /// Reverse pass for training: gradients into raw input leaves are not
    /// materialized (a stem convolution's input gradient is never used).
    pub fn backward_params(
        &self,
        store: &mut Params<F>,
        seed: NodeId,
        seed_grad: Tensor<F>,
    ) -> Result<()> {
        self.backward_impl(store, seed, seed_grad, false)?;
        Ok(())
    }

    fn backward_impl(
        &self,
        store: &mut Params<F>,
        seed: NodeId,
        seed_grad: Tensor<F>,
        want_leaf_grads: bool,
    ) -> Result<Vec<Option<Tensor<F>>>> {
        if seed_grad.dims() != self.value(seed).dims() {
            return Err(Error::shape(
                "tape_backward",
                format!(
                    "seed grad {:?} does not match node value {:?}",
                    seed_grad.dims(),
                    self.value(seed).dims()
                ),
            ));
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; self.nodes.len()];
        grads[seed.0] = Some(seed_grad);

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].clone() else {
                continue;
            };
            match &self.nodes[i] {
                TapeNode::Input => {}
                TapeNode::Conv3d {
                    x,
                    w,
                    b,
                    stride,
                    padding,
                } => {
                    let p = Conv3dParams::new(
                        store.value(*w).clone(),
                        b.map(|id| store.value(id).clone()),
                        *stride,
                        *padding,
                    )?;
                    let input_is_leaf = matches!(self.nodes[x.0], TapeNode::Input);
                    if input_is_leaf && !want_leaf_grads {
                        let (gw, gb) = conv3d_param_grads(self.value(*x), &p, &g)?;
                        store.accumulate_grad(*w, &gw)?;
                        if let (Some(bid), Some(gb)) = (b, gb) {
                            store.accumulate_grad(*bid, &gb)?;
                        }
                    } else {
                        let out = conv3d_backward(self.value(*x), &p, &g)?;
                        accumulate(&mut grads, *x, out.grad_x)?;
                        store.accumulate_grad(*w, &out.grad_w)?;
                        if let (Some(bid), Some(gb)) = (b, out.grad_b) {
                            store.accumulate_grad(*bid, &gb)?;
                        }
                    }
                }
                TapeNode::Prelu { x, slope } => {
                    let (gx, ga) = prelu_backward(self.value(*x), store.value(*slope), &g)?;
                    accumulate(&mut grads, *x, gx)?;
                    store.accumulate_grad(*slope, &ga)?;
                }
                TapeNode::Relu { x } => {
                    let xv = self.value(*x);
                    let mut gx = g;
                    for (gv, &x_) in gx.data_mut().iter_mut().zip(xv.data()) {
                        if x_ <= F::zero() {
                            *gv = F::zero();
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                TapeNode::BatchNorm {
                    x,
                    gamma,
                    beta,
                    stats,
                    eps,
                } => {
                    let (gx, ggamma, gbeta) =
                        batchnorm3d_backward(self.value(*x), store.value(*gamma), *eps, stats, &g)?;
                    accumulate(&mut grads, *x, gx)?;
                    store.accumulate_grad(*gamma, &ggamma)?;
                    store.accumulate_grad(*beta, &gbeta)?;
                }
                TapeNode::Pool {
                    x,
                    kind,
                    window,
                    stride,
                    padding,
                    argmax,
                } => {
                    let gx = pool3d_backward(
                        self.value(*x),
                        *kind,
                        *window,
                        *stride,
                        *padding,
                        argmax.as_deref(),
                        &g,
                    )?;
                    accumulate(&mut grads, *x, gx)?;
                }
                TapeNode::GlobalAvgPool { x } => {
                    let gx = global_avg_pool_backward(self.value(*x).dims(), &g)?;
                    accumulate(&mut grads, *x, gx)?;
                }
                TapeNode::Linear { x, w, b } => {
                    let (gx, gw, gb) = linear_backward(self.value(*x), store.value(*w), &g)?;
                    accumulate(&mut grads, *x, gx)?;
                    store.accumulate_grad(*w, &gw)?;
                    if let Some(bid) = b {
                        store.accumulate_grad(*bid, &gb)?;
                    }
                }
                TapeNode::Add { a, b } => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g)?;
                }
                TapeNode::ConcatChannels { a, b } => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let (b_n, ca, cb) = (va.dims()[0], va.dims()[1], vb.dims()[1]);
                    let inner: usize = va.dims()[2..].iter().product();
                    let mut ga = Tensor::zeros(va.dims())?;
                    let mut gb = Tensor::zeros(vb.dims())?;
                    for bi in 0..b_n {
                        let src = bi * (ca + cb) * inner;
                        ga.data_mut()[bi * ca * inner..(bi + 1) * ca * inner]
                            .copy_from_slice(&g.data()[src..src + ca * inner]);
                        gb.data_mut()[bi * cb * inner..(bi + 1) * cb * inner]
                            .copy_from_slice(&g.data()[src + ca * inner..src + (ca + cb) * inner]);
                    }
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
            }
        }
        Ok(grads)
    }
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate<F: Scalar>(
    grads: &mut [Option<Tensor<F>>],
    id: NodeId,
    g: Tensor<F>,
) -> Result<()> {
    match &mut grads[id.0] {
        Some(t) => t.add_in_place(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::probe_gradient;
    use crate::rng::Rng;

    /// Shared-input fan-out: y = conv(x) + x must accumulate both paths.
    #[test]
    fn fanout_accumulates_gradients() {
        let mut store: Params<f64> = Params::new();
        let mut rng = Rng::new(4);
        let w: Tensor<f64> = rng.normal(&[2, 2, 1, 1, 1], 0.0, 1.0).unwrap();
        let wid = store.push("w", w.clone(), true);

        let x: Tensor<f64> = rng.normal(&[1, 2, 2, 2, 2], 0.0, 1.0).unwrap();
        let v: Tensor<f64> = rng.normal(x.dims(), 0.0, 1.0).unwrap();

        let mut tape = Tape::new();
        let xid = tape.input(x.clone());
        let c = tape.conv3d(&store, xid, wid, None, [1, 1, 1], [0, 0, 0]).unwrap();
        let y = tape.add(c, xid).unwrap();
        let grads = tape.backward(&mut store, y, v.clone()).unwrap();
        let gx = grads[xid.0].clone().unwrap();

        let mut f = |t: &Tensor<f64>| {
            let mut tape = Tape::new();
            let xid = tape.input(t.clone());
            let c = tape
                .conv3d(&store, xid, wid, None, [1, 1, 1], [0, 0, 0])
                .unwrap();
            let y = tape.add(c, xid).unwrap();
            Ok(tape
                .value(y)
                .data()
                .iter()
                .zip(v.data())
                .map(|(a, c)| a * c)
                .sum())
        };
        let mut rng_p = Rng::new(1);
        let err = probe_gradient(&mut f, &x, &gx, 32, &mut rng_p).unwrap().max_rel_err;
        assert!(err <= 1e-6, "fan-out grad err {err}");
    }

    #[test]
    fn concat_roundtrips_gradient() {
        let mut store: Params<f32> = Params::new();
        let mut rng = Rng::new(5);
        let a: Tensor<f32> = rng.uniform(&[2, 2, 1, 2, 2]).unwrap();
        let b: Tensor<f32> = rng.uniform(&[2, 3, 1, 2, 2]).unwrap();
        let mut tape = Tape::new();
        let aid = tape.input(a.clone());
        let bid = tape.input(b.clone());
        let c = tape.concat_channels(aid, bid).unwrap();
        assert_eq!(tape.value(c).dims(), &[2, 5, 1, 2, 2]);
        let seed: Tensor<f32> = rng.uniform(&[2, 5, 1, 2, 2]).unwrap();
        let grads = tape.backward(&mut store, c, seed.clone()).unwrap();
        let ga = grads[aid.0].as_ref().unwrap();
        // channel 0 of sample 1 in a sits at channels 0.. of the concat
        assert_eq!(ga.at(&[1, 0, 0, 1, 1]), seed.at(&[1, 0, 0, 1, 1]));
        let gb = grads[bid.0].as_ref().unwrap();
        assert_eq!(gb.at(&[1, 2, 0, 1, 0]), seed.at(&[1, 4, 0, 1, 0]));
    }
}
