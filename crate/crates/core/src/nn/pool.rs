//! 3D pooling. Max pooling tracks the argmax of each window (first maximum
//! in scan order) for the backward pass; average pooling divides by the
//! number of in-bounds elements, so padding never contributes.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use super::conv3d::conv3d_out_dims as pool_extent_formula;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Avg,
}

/// Same extent formula as conv3d.
pub fn pool3d_out_dims(
    input: [usize; 3],
    window: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
) -> Result<[usize; 3]> {
    for i in 0..3 {
        if window[i] == 0 || stride[i] == 0 {
            return Err(Error::Config(format!(
                "pool window {window:?} and stride {stride:?} must be >= 1"
            )));
        }
        if padding[i] >= window[i] {
            return Err(Error::Config(format!(
                "pool padding {padding:?} must be smaller than window {window:?}"
            )));
        }
    }
    super::conv3d::conv3d_out_dims(input, window, stride, padding)
}

pub struct PoolOut<F: Scalar> {
    pub out: Tensor<F>,
    /// Flat input index chosen per output element (max pooling only).
    pub argmax: Option<Vec<u32>>,
}

pub fn pool3d_forward<F: Scalar>(
    x: &Tensor<F>,
    kind: PoolKind,
    window: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
) -> Result<PoolOut<F>> {
    if x.rank() != 5 {
        return Err(Error::shape(
            "pool3d",
            format!("input must be [B, C, T, H, W], got {:?}", x.dims()),
        ));
    }
    let (b_n, c_n) = (x.dims()[0], x.dims()[1]);
    let (t, h, w) = (x.dims()[2], x.dims()[3], x.dims()[4]);
    let [to, ho, wo] = pool3d_out_dims([t, h, w], window, stride, padding)?;
    let mut out = Tensor::zeros(&[b_n, c_n, to, ho, wo])?;
    let mut argmax = if kind == PoolKind::Max {
        Some(vec![0u32; out.len()])
    } else {
        None
    };
    let xd = x.data();
    let od = out.data_mut();
    let mut o = 0usize;
    for b in 0..b_n {
        for c in 0..c_n {
            let plane = ((b * c_n + c) * t) * h * w;
            for ot in 0..to {
                let t0 = (ot * stride[0]) as isize - padding[0] as isize;
                for oh in 0..ho {
                    let h0 = (oh * stride[1]) as isize - padding[1] as isize;
                    for ow in 0..wo {
                        let w0 = (ow * stride[2]) as isize - padding[2] as isize;
                        match kind {
                            PoolKind::Max => {
                                let mut best = F::neg_infinity();
                                let mut best_idx = 0u32;
                                for dt in 0..window[0] {
                                    let it = t0 + dt as isize;
                                    if it < 0 || it >= t as isize {
                                        continue;
                                    }
                                    for dh in 0..window[1] {
                                        let ih = h0 + dh as isize;
                                        if ih < 0 || ih >= h as isize {
                                            continue;
                                        }
                                        for dw in 0..window[2] {
                                            let iw = w0 + dw as isize;
                                            if iw < 0 || iw >= w as isize {
                                                continue;
                                            }
                                            let idx = plane
                                                + (it as usize * h + ih as usize) * w
                                                + iw as usize;
                                            if xd[idx] > best {
                                                best = xd[idx];
                                                best_idx = idx as u32;
                                            }
                                        }
                                    }
                                }
                                od[o] = best;
                                argmax.as_mut().unwrap()[o] = best_idx;
                            }
                            PoolKind::Avg => {
                                let mut acc = 0.0f64;
                                let mut count = 0usize;
                                for dt in 0..window[0] {
                                    let it = t0 + dt as isize;
                                    if it < 0 || it >= t as isize {
                                        continue;
                                    }
                                    for dh in 0..window[1] {
                                        let ih = h0 + dh as isize;
                                        if ih < 0 || ih >= h as isize {
                                            continue;
                                        }
                                        for dw in 0..window[2] {
                                            let iw = w0 + dw as isize;
                                            if iw < 0 || iw >= w as isize {
                                                continue;
                                            }
                                            acc += xd[plane
                                                + (it as usize * h + ih as usize) * w
                                                + iw as usize]
                                                .as_f64();
                                            count += 1;
                                        }
                                    }
                                }
                                od[o] = F::of_f64(acc / count as f64);
                            }
                        }
                        o += 1;
                    }
                }
            }
        }
    }
    Ok(PoolOut { out, argmax })
}

pub fn pool3d_backward<F: Scalar>(
    x: &Tensor<F>,
    kind: PoolKind,
    window: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
    argmax: Option<&[u32]>,
    grad_out: &Tensor<F>,
) -> Result<Tensor<F>> {
    let mut grad_x = Tensor::zeros(x.dims())?;
    match kind {
        PoolKind::Max => {
            let argmax = argmax.ok_or_else(|| {
                Error::shape("pool3d_backward", "max pooling needs saved argmax".to_string())
            })?;
            if argmax.len() != grad_out.len() {
                return Err(Error::shape(
                    "pool3d_backward",
                    format!("argmax len {} vs grad len {}", argmax.len(), grad_out.len()),
                ));
            }
            let gxd = grad_x.data_mut();
            for (o, &g) in grad_out.data().iter().enumerate() {
                gxd[argmax[o] as usize] += g;
            }
        }
        PoolKind::Avg => {
            let (b_n, c_n) = (x.dims()[0], x.dims()[1]);
            let (t, h, w) = (x.dims()[2], x.dims()[3], x.dims()[4]);
            let [to, ho, wo] = pool3d_out_dims([t, h, w], window, stride, padding)?;
            if grad_out.dims() != [b_n, c_n, to, ho, wo] {
                return Err(Error::shape(
                    "pool3d_backward",
                    format!("grad dims {:?} unexpected", grad_out.dims()),
                ));
            }
            let gd = grad_out.data();
            let gxd = grad_x.data_mut();
            let mut o = 0usize;
            for b in 0..b_n {
                for c in 0..c_n {
                    let plane = ((b * c_n + c) * t) * h * w;
                    for ot in 0..to {
                        let t0 = (ot * stride[0]) as isize - padding[0] as isize;
                        for oh in 0..ho {
                            let h0 = (oh * stride[1]) as isize - padding[1] as isize;
                            for ow in 0..wo {
                                let w0 = (ow * stride[2]) as isize - padding[2] as isize;
                                let mut members = Vec::new();
                                for dt in 0..window[0] {
                                    let it = t0 + dt as isize;
                                    if it < 0 || it >= t as isize {
                                        continue;
                                    }
                                    for dh in 0..window[1] {
                                        let ih = h0 + dh as isize;
                                        if ih < 0 || ih >= h as isize {
                                            continue;
                                        }
                                        for dw in 0..window[2] {
                                            let iw = w0 + dw as isize;
                                            if iw < 0 || iw >= w as isize {
                                                continue;
                                            }
                                            members.push(
                                                plane
                                                    + (it as usize * h + ih as usize) * w
                                                    + iw as usize,
                                            );
                                        }
                                    }
                                }
                                let share = gd[o] / F::of_f64(members.len() as f64);
                                for idx in members {
                                    gxd[idx] += share;
                                }
                                o += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(grad_x)
}

/// Mean over all of `(T, H, W)`: `[B, C, T, H, W] -> [B, C]`.
pub fn global_avg_pool<F: Scalar>(x: &Tensor<F>) -> Result<Tensor<F>> {
    if x.rank() != 5 {
        return Err(Error::shape(
            "global_avg_pool",
            format!("input must be [B, C, T, H, W], got {:?}", x.dims()),
        ));
    }
    let (b_n, c_n) = (x.dims()[0], x.dims()[1]);
    let inner: usize = x.dims()[2..].iter().product();
    let mut out = Tensor::zeros(&[b_n, c_n])?;
    for b in 0..b_n {
        for c in 0..c_n {
            let base = (b * c_n + c) * inner;
            let acc: f64 = x.data()[base..base + inner]
                .iter()
                .map(|v| v.as_f64())
                .sum();
            out.data_mut()[b * c_n + c] = F::of_f64(acc / inner as f64);
        }
    }
    Ok(out)
}

pub fn global_avg_pool_backward<F: Scalar>(
    x_dims: &[usize],
    grad_out: &Tensor<F>,
) -> Result<Tensor<F>> {
    let (b_n, c_n) = (x_dims[0], x_dims[1]);
    if grad_out.dims() != [b_n, c_n] {
        return Err(Error::shape(
            "global_avg_pool_backward",
            format!("grad dims {:?}, expected [{b_n}, {c_n}]", grad_out.dims()),
        ));
    }
    let inner: usize = x_dims[2..].iter().product();
    let mut grad_x = Tensor::zeros(x_dims)?;
    let gxd = grad_x.data_mut();
    for b in 0..b_n {
        for c in 0..c_n {
            let share = grad_out.data()[b * c_n + c] / F::of_f64(inner as f64);
            let base = (b * c_n + c) * inner;
            for v in &mut gxd[base..base + inner] {
                *v = share;
            }
        }
    }
    Ok(grad_x)
}
