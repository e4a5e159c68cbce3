//! Parameter update rules: Adamax (the training optimizer) and momentum SGD
//! (the baseline configuration).

use crate::error::{Error, Result};
use crate::nn::{ParamId, Params};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adamax: Adam with an exponentially-weighted infinity norm in place of the
/// second moment.
///
/// ```text
/// m <- b1 m + (1 - b1) g
/// u <- max(b2 u, |g|)
/// p <- p - lr / (1 - b1^t) * m / (u + eps)
/// ```
///
/// Weight decay, when positive, is applied additively to the gradient first.
#[derive(Debug, Clone)]
pub struct AdamaxState<F: Scalar> {
    pub lr: F,
    pub beta1: F,
    pub beta2: F,
    pub eps: F,
    pub weight_decay: F,
    pub t: u64,
    ids: Vec<ParamId>,
    m: Vec<Tensor<F>>,
    u: Vec<Tensor<F>>,
}

pub const ADAMAX_DEFAULT_LR: f64 = 0.002;
pub const ADAMAX_DEFAULT_BETA1: f64 = 0.9;
pub const ADAMAX_DEFAULT_BETA2: f64 = 0.999;
pub const ADAMAX_DEFAULT_EPS: f64 = 1e-8;

impl<F: Scalar> AdamaxState<F> {
    pub fn new(store: &Params<F>, lr: F, weight_decay: F) -> Result<Self> {
        let ids = store.trainable_ids();
        let m = ids
            .iter()
            .map(|&id| Tensor::zeros(store.value(id).dims()))
            .collect::<Result<Vec<_>>>()?;
        let u = m.clone();
        Ok(AdamaxState {
            lr,
            beta1: F::of_f64(ADAMAX_DEFAULT_BETA1),
            beta2: F::of_f64(ADAMAX_DEFAULT_BETA2),
            eps: F::of_f64(ADAMAX_DEFAULT_EPS),
            weight_decay,
            t: 0,
            ids,
            m,
            u,
        })
    }

    pub fn with_defaults(store: &Params<F>) -> Result<Self> {
        Self::new(store, F::of_f64(ADAMAX_DEFAULT_LR), F::zero())
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    /// First-moment and infinity-norm buffers for checkpointing, aligned
    /// with `ids()`.
    pub fn buffers(&self) -> (&[Tensor<F>], &[Tensor<F>]) {
        (&self.m, &self.u)
    }

    pub fn buffers_mut(&mut self) -> (&mut [Tensor<F>], &mut [Tensor<F>]) {
        (&mut self.m, &mut self.u)
    }

    /// One update over every trainable parameter using the gradients
    /// accumulated in `store`.
    pub fn step(&mut self, store: &mut Params<F>) -> Result<()> {
        self.t += 1;
        let bias_fix = F::one() - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let scale = self.lr / bias_fix;
        for (slot, &id) in self.ids.iter().enumerate() {
            let grad = store.grad(id);
            if !grad.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    store.name(id)
                )));
            }
            let wd = self.weight_decay;
            let m = self.m[slot].data_mut();
            let u = self.u[slot].data_mut();
            // split borrows: read grad values first, then update the param
            let gvals: Vec<F> = if wd > F::zero() {
                grad.data()
                    .iter()
                    .zip(store.value(id).data())
                    .map(|(&g, &p)| g + wd * p)
                    .collect()
            } else {
                grad.data().to_vec()
            };
            let pvals = store.value_mut(id).data_mut();
            for i in 0..gvals.len() {
                let g = gvals[i];
                m[i] = self.beta1 * m[i] + (F::one() - self.beta1) * g;
                let cand = g.abs();
                let decayed = self.beta2 * u[i];
                u[i] = if cand > decayed { cand } else { decayed };
                pvals[i] = pvals[i] - scale * m[i] / (u[i] + self.eps);
            }
        }
        Ok(())
    }
}

/// Momentum SGD: `v <- momentum v + g ; p <- p - lr v`.
#[derive(Debug, Clone)]
pub struct SgdState<F: Scalar> {
    pub lr: F,
    pub momentum: F,
    ids: Vec<ParamId>,
    velocity: Vec<Tensor<F>>,
}

pub const SGD_DEFAULT_LR: f64 = 0.1;
pub const SGD_DEFAULT_MOMENTUM: f64 = 0.9;

impl<F: Scalar> SgdState<F> {
    pub fn new(store: &Params<F>, lr: F, momentum: F) -> Result<Self> {
        let ids = store.trainable_ids();
        let velocity = ids
            .iter()
            .map(|&id| Tensor::zeros(store.value(id).dims()))
            .collect::<Result<Vec<_>>>()?;
        Ok(SgdState {
            lr,
            momentum,
            ids,
            velocity,
        })
    }

    pub fn ids(&self) -> &[ParamId] {
        &self.ids
    }

    pub fn buffers(&self) -> &[Tensor<F>] {
        &self.velocity
    }

    pub fn buffers_mut(&mut self) -> &mut [Tensor<F>] {
        &mut self.velocity
    }

    pub fn step(&mut self, store: &mut Params<F>) -> Result<()> {
        for (slot, &id) in self.ids.iter().enumerate() {
            let grad = store.grad(id);
            if !grad.all_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite gradient for parameter '{}'",
                    store.name(id)
                )));
            }
            let gvals: Vec<F> = grad.data().to_vec();
            let v = self.velocity[slot].data_mut();
            let pvals = store.value_mut(id).data_mut();
            for i in 0..gvals.len() {
                v[i] = self.momentum * v[i] + gvals[i];
                pvals[i] = pvals[i] - self.lr * v[i];
            }
        }
        Ok(())
    }
}
