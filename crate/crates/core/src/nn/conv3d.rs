//! 3D cross-correlation over (time, height, width).
//!
//! Convention: no kernel flip (cross-correlation), zero padding, floor
//! output extents. Inputs are `[B, Cin, T, H, W]`, weights
//! `[Cout, Cin, kT, kH, kW]`.
//!
//! The kernels run as im2col plus a fixed-order GEMM: every output element
//! accumulates its `(ic, kt, kh, kw)` contributions in the same sequence on
//! every run, so results are bit-identical run to run.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct Conv3dParams<F: Scalar> {
    pub weights: Tensor<F>,
    pub bias: Option<Tensor<F>>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl<F: Scalar> Conv3dParams<F> {
    pub fn new(
        weights: Tensor<F>,
        bias: Option<Tensor<F>>,
        stride: [usize; 3],
        padding: [usize; 3],
    ) -> Result<Self> {
        if weights.rank() != 5 {
            return Err(Error::shape(
                "conv3d",
                format!("weights must be rank 5, got {:?}", weights.dims()),
            ));
        }
        if stride.iter().any(|&s| s == 0) {
            return Err(Error::Config(format!(
                "conv3d stride {stride:?} must be >= 1"
            )));
        }
        if let Some(b) = &bias {
            if b.dims() != [weights.dims()[0]] {
                return Err(Error::shape(
                    "conv3d",
                    format!(
                        "bias {:?} does not match {} output channels",
                        b.dims(),
                        weights.dims()[0]
                    ),
                ));
            }
        }
        Ok(Conv3dParams {
            weights,
            bias,
            stride,
            padding,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.dims()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.dims()[1]
    }

    pub fn kernel(&self) -> [usize; 3] {
        [
            self.weights.dims()[2],
            self.weights.dims()[3],
            self.weights.dims()[4],
        ]
    }
}

const AXES: [&str; 3] = ["time", "height", "width"];

/// Output extents: `floor((d + 2p - k) / s) + 1` per axis, each >= 1.
pub fn conv3d_out_dims(
    input: [usize; 3],
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
) -> Result<[usize; 3]> {
    let mut out = [0usize; 3];
    for i in 0..3 {
        let padded = input[i] + 2 * padding[i];
        if padded < kernel[i] {
            return Err(Error::shape(
                "conv3d",
                format!(
                    "non-positive output extent on {} axis: input {} + 2*{} < kernel {}",
                    AXES[i], input[i], padding[i], kernel[i]
                ),
            ));
        }
        out[i] = (padded - kernel[i]) / stride[i] + 1;
    }
    Ok(out)
}

/// Range of output positions whose input index `o*s + off` lands in `[0, extent)`.
#[inline]
fn valid_out_range(
    in_extent: usize,
    out_extent: usize,
    stride: usize,
    off: isize,
) -> (usize, usize) {
    let lo = if off >= 0 {
        0
    } else {
        ((-off) as usize + stride - 1) / stride
    };
    let top = in_extent as isize - 1 - off;
    if top < 0 {
        return (0, 0);
    }
    let hi = (top as usize / stride + 1).min(out_extent);
    (lo.min(hi), hi)
}

fn check_forward_dims<F: Scalar>(x: &Tensor<F>, p: &Conv3dParams<F>) -> Result<[usize; 3]> {
    if x.rank() != 5 {
        return Err(Error::shape(
            "conv3d",
            format!("input must be [B, C, T, H, W], got {:?}", x.dims()),
        ));
    }
    if x.dims()[1] != p.in_channels() {
        return Err(Error::shape(
            "conv3d",
            format!(
                "input channels {} do not match weight channels {}",
                x.dims()[1],
                p.in_channels()
            ),
        ));
    }
    conv3d_out_dims(
        [x.dims()[2], x.dims()[3], x.dims()[4]],
        p.kernel(),
        p.stride,
        p.padding,
    )
}

/// Geometry shared by the three kernel passes.
struct Geometry {
    cin: usize,
    t: usize,
    h: usize,
    w: usize,
    to: usize,
    ho: usize,
    wo: usize,
    kernel: [usize; 3],
    stride: [usize; 3],
    padding: [usize; 3],
}

impl Geometry {
    fn k_len(&self) -> usize {
        self.cin * self.kernel[0] * self.kernel[1] * self.kernel[2]
    }

    fn patch_len(&self) -> usize {
        self.to * self.ho * self.wo
    }

    fn in_plane(&self) -> usize {
        self.t * self.h * self.w
    }
}

/// Unpack one sample into `cols[K, P]`: row `kk = (ic, kt, kh, kw)` holds the
/// input value each output position reads through that kernel tap, zero for
/// padded positions.
fn im2col<F: Scalar>(x: &[F], g: &Geometry, cols: &mut [F]) {
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let p_len = g.patch_len();
    let mut kk = 0usize;
    for ic in 0..g.cin {
        let plane = ic * g.in_plane();
        for kti in 0..kt {
            let t_off = kti as isize - pt as isize;
            let (ot_lo, ot_hi) = valid_out_range(g.t, g.to, st, t_off);
            for khi in 0..kh {
                let h_off = khi as isize - ph as isize;
                let (oh_lo, oh_hi) = valid_out_range(g.h, g.ho, sh, h_off);
                for kwi in 0..kw {
                    let w_off = kwi as isize - pw as isize;
                    let (ow_lo, ow_hi) = valid_out_range(g.w, g.wo, sw, w_off);
                    let row = &mut cols[kk * p_len..(kk + 1) * p_len];
                    row.fill(F::zero());
                    if ow_lo < ow_hi {
                        let iw0 = (ow_lo * sw) as isize + w_off;
                        for ot in ot_lo..ot_hi {
                            let it = ((ot * st) as isize + t_off) as usize;
                            for oh in oh_lo..oh_hi {
                                let ih = ((oh * sh) as isize + h_off) as usize;
                                let xrow = plane + (it * g.h + ih) * g.w + iw0 as usize;
                                let dst = &mut row[(ot * g.ho + oh) * g.wo + ow_lo
                                    ..(ot * g.ho + oh) * g.wo + ow_hi];
                                if sw == 1 {
                                    dst.copy_from_slice(&x[xrow..xrow + (ow_hi - ow_lo)]);
                                } else {
                                    for (d, &v) in
                                        dst.iter_mut().zip(x[xrow..].iter().step_by(sw))
                                    {
                                        *d = v;
                                    }
                                }
                            }
                        }
                    }
                    kk += 1;
                }
            }
        }
    }
}

/// Scatter-add `cols[K, P]` back into one input-shaped sample gradient.
fn col2im_add<F: Scalar>(cols: &[F], g: &Geometry, gx: &mut [F]) {
    let [kt, kh, kw] = g.kernel;
    let [st, sh, sw] = g.stride;
    let [pt, ph, pw] = g.padding;
    let p_len = g.patch_len();
    let mut kk = 0usize;
    for ic in 0..g.cin {
        let plane = ic * g.in_plane();
        for kti in 0..kt {
            let t_off = kti as isize - pt as isize;
            let (ot_lo, ot_hi) = valid_out_range(g.t, g.to, st, t_off);
            for khi in 0..kh {
                let h_off = khi as isize - ph as isize;
                let (oh_lo, oh_hi) = valid_out_range(g.h, g.ho, sh, h_off);
                for kwi in 0..kw {
                    let w_off = kwi as isize - pw as isize;
                    let (ow_lo, ow_hi) = valid_out_range(g.w, g.wo, sw, w_off);
                    let row = &cols[kk * p_len..(kk + 1) * p_len];
                    if ow_lo < ow_hi {
                        let iw0 = (ow_lo * sw) as isize + w_off;
                        for ot in ot_lo..ot_hi {
                            let it = ((ot * st) as isize + t_off) as usize;
                            for oh in oh_lo..oh_hi {
                                let ih = ((oh * sh) as isize + h_off) as usize;
                                let xrow = plane + (it * g.h + ih) * g.w + iw0 as usize;
                                let src = &row[(ot * g.ho + oh) * g.wo + ow_lo
                                    ..(ot * g.ho + oh) * g.wo + ow_hi];
                                if sw == 1 {
                                    for (d, &v) in gx[xrow..xrow + src.len()]
                                        .iter_mut()
                                        .zip(src)
                                    {
                                        *d += v;
                                    }
                                } else {
                                    for (d, &v) in
                                        gx[xrow..].iter_mut().step_by(sw).zip(src)
                                    {
                                        *d += v;
                                    }
                                }
                            }
                        }
                    }
                    kk += 1;
                }
            }
        }
    }
}

/// `c[m, n] += a[m, k] x b[k, n]`, accumulating in k order.
fn gemm_acc<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m, n] += a[k, m]^T x b[k, n]`, accumulating in k order.
fn gemm_tn_acc<F: Scalar>(a: &[F], b: &[F], c: &mut [F], k: usize, m: usize, n: usize) {
    for kk in 0..k {
        let arow = &a[kk * m..(kk + 1) * m];
        let brow = &b[kk * n..(kk + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// `c[m, n] += a[m, k] x b[n, k]^T` via contiguous row dots. Eight
/// independent partial sums break the FP dependency chain; they combine in
/// a fixed order, so the result is still deterministic.
fn gemm_nt_acc<F: Scalar>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    const LANES: usize = 8;
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut lanes = [F::zero(); LANES];
            let chunks = k / LANES;
            for ch in 0..chunks {
                let av = &arow[ch * LANES..(ch + 1) * LANES];
                let bv = &brow[ch * LANES..(ch + 1) * LANES];
                for l in 0..LANES {
                    lanes[l] = lanes[l] + av[l] * bv[l];
                }
            }
            let mut acc = F::zero();
            for lane in lanes {
                acc += lane;
            }
            for idx in chunks * LANES..k {
                acc += arow[idx] * brow[idx];
            }
            *cv += acc;
        }
    }
}

fn geometry<F: Scalar>(x: &Tensor<F>, p: &Conv3dParams<F>) -> Result<Geometry> {
    let [to, ho, wo] = check_forward_dims(x, p)?;
    Ok(Geometry {
        cin: x.dims()[1],
        t: x.dims()[2],
        h: x.dims()[3],
        w: x.dims()[4],
        to,
        ho,
        wo,
        kernel: p.kernel(),
        stride: p.stride,
        padding: p.padding,
    })
}

pub fn conv3d_forward<F: Scalar>(x: &Tensor<F>, p: &Conv3dParams<F>) -> Result<Tensor<F>> {
    let g = geometry(x, p)?;
    let b_n = x.dims()[0];
    let cout = p.out_channels();
    let (k_len, p_len) = (g.k_len(), g.patch_len());
    let mut out = Tensor::zeros(&[b_n, cout, g.to, g.ho, g.wo])?;
    let mut cols = vec![F::zero(); k_len * p_len];
    let in_len = g.cin * g.in_plane();
    let wd = p.weights.data();
    for b in 0..b_n {
        im2col(&x.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
        let dst = &mut out.data_mut()[b * cout * p_len..(b + 1) * cout * p_len];
        if let Some(bias) = &p.bias {
            for oc in 0..cout {
                dst[oc * p_len..(oc + 1) * p_len].fill(bias.data()[oc]);
            }
        }
        gemm_acc(wd, &cols, dst, cout, k_len, p_len);
    }
    Ok(out)
}

#[derive(Debug)]
pub struct Conv3dGrads<F: Scalar> {
    pub grad_x: Tensor<F>,
    pub grad_w: Tensor<F>,
    pub grad_b: Option<Tensor<F>>,
}

fn check_backward_dims<F: Scalar>(
    x: &Tensor<F>,
    p: &Conv3dParams<F>,
    grad_out: &Tensor<F>,
) -> Result<Geometry> {
    let g = geometry(x, p)?;
    let expected = [x.dims()[0], p.out_channels(), g.to, g.ho, g.wo];
    if grad_out.dims() != expected {
        return Err(Error::shape(
            "conv3d_backward",
            format!("grad dims {:?}, expected {expected:?}", grad_out.dims()),
        ));
    }
    Ok(g)
}

/// Gradient wrt the input alone.
pub fn conv3d_input_grad<F: Scalar>(
    x: &Tensor<F>,
    p: &Conv3dParams<F>,
    grad_out: &Tensor<F>,
) -> Result<Tensor<F>> {
    let g = check_backward_dims(x, p, grad_out)?;
    let b_n = x.dims()[0];
    let cout = p.out_channels();
    let (k_len, p_len) = (g.k_len(), g.patch_len());
    let in_len = g.cin * g.in_plane();
    let wd = p.weights.data();
    let mut grad_x = Tensor::zeros(x.dims())?;
    let mut cols_grad = vec![F::zero(); k_len * p_len];
    for b in 0..b_n {
        cols_grad.fill(F::zero());
        let gout = &grad_out.data()[b * cout * p_len..(b + 1) * cout * p_len];
        // cols_grad[K, P] = W^T[K, Cout] x gout[Cout, P]
        gemm_tn_acc(wd, gout, &mut cols_grad, cout, k_len, p_len);
        col2im_add(
            &cols_grad,
            &g,
            &mut grad_x.data_mut()[b * in_len..(b + 1) * in_len],
        );
    }
    Ok(grad_x)
}

/// Gradients wrt weights and bias only, for the training path where the
/// convolution consumes the raw input and its input gradient is unused.
/// Samples accumulate in batch order.
pub fn conv3d_param_grads<F: Scalar>(
    x: &Tensor<F>,
    p: &Conv3dParams<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Option<Tensor<F>>)> {
    let g = check_backward_dims(x, p, grad_out)?;
    let b_n = x.dims()[0];
    let cout = p.out_channels();
    let (k_len, p_len) = (g.k_len(), g.patch_len());
    let in_len = g.cin * g.in_plane();
    let mut grad_w = Tensor::zeros(p.weights.dims())?;
    let mut cols = vec![F::zero(); k_len * p_len];
    for b in 0..b_n {
        im2col(&x.data()[b * in_len..(b + 1) * in_len], &g, &mut cols);
        let gout = &grad_out.data()[b * cout * p_len..(b + 1) * cout * p_len];
        // grad_w[Cout, K] += gout[Cout, P] x cols[K, P]^T
        gemm_nt_acc(gout, &cols, grad_w.data_mut(), cout, p_len, k_len);
    }

    let grad_b = if p.bias.is_some() {
        let mut gb = vec![0.0f64; cout];
        let gd = grad_out.data();
        for b in 0..b_n {
            for (oc, acc) in gb.iter_mut().enumerate() {
                let obase = (b * cout + oc) * p_len;
                for &gv in &gd[obase..obase + p_len] {
                    *acc += gv.as_f64();
                }
            }
        }
        Some(Tensor::new(
            vec![cout],
            gb.into_iter().map(F::of_f64).collect(),
        )?)
    } else {
        None
    };
    Ok((grad_w, grad_b))
}

pub fn conv3d_backward<F: Scalar>(
    x: &Tensor<F>,
    p: &Conv3dParams<F>,
    grad_out: &Tensor<F>,
) -> Result<Conv3dGrads<F>> {
    let grad_x = conv3d_input_grad(x, p, grad_out)?;
    let (grad_w, grad_b) = conv3d_param_grads(x, p, grad_out)?;
    Ok(Conv3dGrads {
        grad_x,
        grad_w,
        grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::{probe_gradient, rel_err};
    use crate::rng::Rng;

    fn params<F: Scalar>(
        w: Tensor<F>,
        bias: Option<Tensor<F>>,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Conv3dParams<F> {
        Conv3dParams::new(w, bias, stride, pad).unwrap()
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let mut rng = Rng::new(1);
        let x: Tensor<f32> = rng.uniform(&[2, 1, 3, 4, 5]).unwrap();
        let w = Tensor::ones(&[1, 1, 1, 1, 1]).unwrap();
        let p = params(w, None, [1, 1, 1], [0, 0, 0]);
        let y = conv3d_forward(&x, &p).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let c = 0.75f32;
        let x = Tensor::full(&[1, 1, 4, 4, 4], c).unwrap();
        let w = Tensor::ones(&[2, 1, 2, 2, 2]).unwrap();
        let p = params(w, None, [1, 1, 1], [0, 0, 0]);
        let y = conv3d_forward(&x, &p).unwrap();
        assert_eq!(y.dims(), &[1, 2, 3, 3, 3]);
        for &v in y.data() {
            assert!((v - 8.0 * c).abs() < 1e-6, "expected {}, got {v}", 8.0 * c);
        }
    }

    #[test]
    fn non_positive_extent_names_axis() {
        let x = Tensor::<f32>::ones(&[1, 1, 2, 8, 8]).unwrap();
        let w = Tensor::<f32>::ones(&[1, 1, 3, 3, 3]).unwrap();
        let p = params(w, None, [1, 1, 1], [0, 1, 1]);
        let err = conv3d_forward(&x, &p).unwrap_err();
        assert!(err.to_string().contains("time"), "{err}");
    }

    /// Independent 7-nested-loop oracle (padding handled by bounds checks).
    fn naive_conv3d(x: &Tensor<f64>, p: &Conv3dParams<f64>) -> Tensor<f64> {
        let [to, ho, wo] = conv3d_out_dims(
            [x.dims()[2], x.dims()[3], x.dims()[4]],
            p.kernel(),
            p.stride,
            p.padding,
        )
        .unwrap();
        let (b_n, cin) = (x.dims()[0], x.dims()[1]);
        let cout = p.out_channels();
        let [kt, kh, kw] = p.kernel();
        let mut out = Tensor::zeros(&[b_n, cout, to, ho, wo]).unwrap();
        for b in 0..b_n {
            for oc in 0..cout {
                for ot in 0..to {
                    for oh in 0..ho {
                        for ow in 0..wo {
                            let mut acc = match &p.bias {
                                Some(bias) => bias.data()[oc],
                                None => 0.0,
                            };
                            for ic in 0..cin {
                                for a in 0..kt {
                                    for bb in 0..kh {
                                        for c in 0..kw {
                                            let it = (ot * p.stride[0] + a) as isize
                                                - p.padding[0] as isize;
                                            let ih = (oh * p.stride[1] + bb) as isize
                                                - p.padding[1] as isize;
                                            let iw = (ow * p.stride[2] + c) as isize
                                                - p.padding[2] as isize;
                                            if it < 0
                                                || ih < 0
                                                || iw < 0
                                                || it >= x.dims()[2] as isize
                                                || ih >= x.dims()[3] as isize
                                                || iw >= x.dims()[4] as isize
                                            {
                                                continue;
                                            }
                                            acc += p.weights.at(&[oc, ic, a, bb, c])
                                                * x.at(&[
                                                    b,
                                                    ic,
                                                    it as usize,
                                                    ih as usize,
                                                    iw as usize,
                                                ]);
                                        }
                                    }
                                }
                            }
                            out.set(&[b, oc, ot, oh, ow], acc);
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn forward_matches_naive_loop_oracle() {
        let mut rng = Rng::new(21);
        let x: Tensor<f64> = rng.normal(&[2, 3, 8, 8, 8], 0.0, 1.0).unwrap();
        let w: Tensor<f64> = rng.normal(&[4, 3, 3, 3, 3], 0.0, 0.5).unwrap();
        let b: Tensor<f64> = rng.normal(&[4], 0.0, 0.5).unwrap();
        let p = params(w, Some(b), [2, 2, 2], [1, 1, 1]);
        let got = conv3d_forward(&x, &p).unwrap();
        let want = naive_conv3d(&x, &p);
        assert_eq!(got.dims(), want.dims());
        for (g, w_) in got.iter().zip(want.iter()) {
            assert!(rel_err(*g, *w_, 1e-9) <= 1e-5, "got {g}, want {w_}");
        }
    }

    #[test]
    fn strided_asymmetric_case_matches_oracle() {
        // stem-like geometry: kernel (3,5,5), stride (2,4,4)
        let mut rng = Rng::new(77);
        let x: Tensor<f64> = rng.normal(&[1, 3, 6, 21, 21], 0.0, 1.0).unwrap();
        let w: Tensor<f64> = rng.normal(&[2, 3, 3, 5, 5], 0.0, 0.5).unwrap();
        let p = params(w, None, [2, 4, 4], [1, 2, 2]);
        let got = conv3d_forward(&x, &p).unwrap();
        let want = naive_conv3d(&x, &p);
        assert_eq!(got.dims(), want.dims());
        for (g, w_) in got.iter().zip(want.iter()) {
            assert!(rel_err(*g, *w_, 1e-9) <= 1e-6, "got {g}, want {w_}");
        }
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let mut rng = Rng::new(2);
        let x: Tensor<f32> = rng.uniform(&[1, 2, 3, 3, 3]).unwrap();
        let w: Tensor<f32> = rng.uniform(&[2, 2, 2, 2, 2]).unwrap();
        let b: Tensor<f32> = rng.uniform(&[2]).unwrap();
        let p = params(w, Some(b), [1, 1, 1], [0, 0, 0]);
        let y = conv3d_forward(&x, &p).unwrap();
        let g = Tensor::zeros(y.dims()).unwrap();
        let grads = conv3d_backward(&x, &p, &g).unwrap();
        assert!(grads.grad_x.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_w.data().iter().all(|&v| v == 0.0));
        assert!(grads.grad_b.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_kernel_backward_passes_grad_through() {
        let mut rng = Rng::new(3);
        let x: Tensor<f32> = rng.uniform(&[1, 1, 2, 3, 4]).unwrap();
        let w = Tensor::ones(&[1, 1, 1, 1, 1]).unwrap();
        let p = params(w, None, [1, 1, 1], [0, 0, 0]);
        let g: Tensor<f32> = rng.uniform(&[1, 1, 2, 3, 4]).unwrap();
        let grads = conv3d_backward(&x, &p, &g).unwrap();
        assert_eq!(grads.grad_x.data(), g.data());
    }

    #[test]
    fn param_grads_match_full_backward() {
        let mut rng = Rng::new(31);
        let x: Tensor<f64> = rng.normal(&[2, 2, 4, 5, 5], 0.0, 1.0).unwrap();
        let w: Tensor<f64> = rng.normal(&[3, 2, 2, 3, 3], 0.0, 0.5).unwrap();
        let b: Tensor<f64> = rng.normal(&[3], 0.0, 0.5).unwrap();
        let p = params(w, Some(b), [1, 2, 2], [1, 1, 1]);
        let y = conv3d_forward(&x, &p).unwrap();
        let v: Tensor<f64> = rng.normal(y.dims(), 0.0, 1.0).unwrap();
        let full = conv3d_backward(&x, &p, &v).unwrap();
        let (gw, gb) = conv3d_param_grads(&x, &p, &v).unwrap();
        assert_eq!(full.grad_w.data(), gw.data());
        assert_eq!(full.grad_b.unwrap().data(), gb.unwrap().data());
    }

    /// Shared FD scenario: loss = sum(conv(x) * v) for a fixed random v.
    fn fd_check<F: Scalar>() -> (f64, f64, f64) {
        let mut rng = Rng::new(42);
        let x: Tensor<F> = rng.normal(&[2, 2, 4, 5, 5], F::zero(), F::one()).unwrap();
        let w: Tensor<F> = rng
            .normal(&[3, 2, 2, 3, 3], F::zero(), F::of_f64(0.5))
            .unwrap();
        let b: Tensor<F> = rng.normal(&[3], F::zero(), F::of_f64(0.5)).unwrap();
        let p = params(w.clone(), Some(b.clone()), [1, 2, 2], [1, 1, 1]);
        let y = conv3d_forward(&x, &p).unwrap();
        let v: Tensor<F> = rng.normal(y.dims(), F::zero(), F::one()).unwrap();

        let grads = conv3d_backward(&x, &p, &v).unwrap();

        let loss_of = |xx: &Tensor<F>, ww: &Tensor<F>, bb: &Tensor<F>| -> f64 {
            let pp = params(ww.clone(), Some(bb.clone()), [1, 2, 2], [1, 1, 1]);
            conv3d_forward(xx, &pp)
                .unwrap()
                .data()
                .iter()
                .zip(v.data())
                .map(|(&a, &c)| a.as_f64() * c.as_f64())
                .sum()
        };

        let mut rng_p = Rng::new(7);
        let ex = probe_gradient(
            &mut |t: &Tensor<F>| Ok(loss_of(t, &w, &b)),
            &x,
            &grads.grad_x,
            32,
            &mut rng_p,
        )
        .unwrap()
        .max_rel_err;
        let ew = probe_gradient(
            &mut |t: &Tensor<F>| Ok(loss_of(&x, t, &b)),
            &w,
            &grads.grad_w,
            32,
            &mut rng_p,
        )
        .unwrap()
        .max_rel_err;
        let eb = probe_gradient(
            &mut |t: &Tensor<F>| Ok(loss_of(&x, &w, t)),
            &b,
            grads.grad_b.as_ref().unwrap(),
            32,
            &mut rng_p,
        )
        .unwrap()
        .max_rel_err;
        (ex, ew, eb)
    }

    #[test]
    fn backward_matches_finite_differences_f64() {
        let (ex, ew, eb) = fd_check::<f64>();
        assert!(ex <= 1e-5, "grad_x err {ex}");
        assert!(ew <= 1e-5, "grad_w err {ew}");
        assert!(eb <= 1e-5, "grad_b err {eb}");
    }

    #[test]
    fn backward_matches_finite_differences_f32() {
        let (ex, ew, eb) = fd_check::<f32>();
        assert!(ex <= 1e-3, "grad_x err {ex}");
        assert!(ew <= 1e-3, "grad_w err {ew}");
        assert!(eb <= 1e-3, "grad_b err {eb}");
    }

    #[test]
    fn forward_is_linear_with_zero_bias() {
        let mut rng = Rng::new(9);
        let x1: Tensor<f32> = rng.normal(&[1, 2, 4, 4, 4], 0.0, 1.0).unwrap();
        let x2: Tensor<f32> = rng.normal(&[1, 2, 4, 4, 4], 0.0, 1.0).unwrap();
        let w: Tensor<f32> = rng.normal(&[2, 2, 3, 3, 3], 0.0, 0.5).unwrap();
        let p = params(w, None, [1, 1, 1], [1, 1, 1]);
        let (alpha, beta) = (0.7f32, -1.3f32);
        let lhs = conv3d_forward(&x1.scale(alpha).add(&x2.scale(beta)).unwrap(), &p).unwrap();
        let rhs = conv3d_forward(&x1, &p)
            .unwrap()
            .scale(alpha)
            .add(&conv3d_forward(&x2, &p).unwrap().scale(beta))
            .unwrap();
        for (a, b) in lhs.iter().zip(rhs.iter()) {
            assert!((a - b).abs() <= 1e-4, "{a} vs {b}");
        }
    }

    #[test]
    fn out_dims_formula_is_pure() {
        assert_eq!(
            conv3d_out_dims([16, 112, 112], [3, 5, 5], [2, 4, 4], [1, 2, 2]).unwrap(),
            [8, 28, 28]
        );
        assert_eq!(
            conv3d_out_dims([1, 7, 7], [3, 3, 3], [2, 2, 2], [1, 1, 1]).unwrap(),
            [1, 4, 4]
        );
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = Rng::new(5);
        let x: Tensor<f32> = rng.normal(&[2, 3, 5, 9, 9], 0.0, 1.0).unwrap();
        let w: Tensor<f32> = rng.normal(&[4, 3, 3, 3, 3], 0.0, 0.5).unwrap();
        let p = params(w, None, [2, 2, 2], [1, 1, 1]);
        let a = conv3d_forward(&x, &p).unwrap();
        let b = conv3d_forward(&x, &p).unwrap();
        for (x1, x2) in a.data().iter().zip(b.data()) {
            assert_eq!(x1.to_bits(), x2.to_bits());
        }
    }
}
