//! Parametric ReLU with one learnable slope per channel.
//!
//! `f(x) = x` for `x > 0`, `a_c * x` otherwise. Inputs are `[B, C, ...]`
//! with the channel axis second.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn check_channels<F: Scalar>(x: &Tensor<F>, slope: &Tensor<F>) -> Result<(usize, usize, usize)> {
    if x.rank() < 2 {
        return Err(Error::shape(
            "prelu",
            format!("input must be [B, C, ...], got {:?}", x.dims()),
        ));
    }
    let channels = x.dims()[1];
    if slope.dims() != [channels] {
        return Err(Error::shape(
            "prelu",
            format!(
                "slope {:?} does not match {channels} channels",
                slope.dims()
            ),
        ));
    }
    let batch = x.dims()[0];
    let inner: usize = x.dims()[2..].iter().product();
    Ok((batch, channels, inner))
}

pub fn prelu_forward<F: Scalar>(x: &Tensor<F>, slope: &Tensor<F>) -> Result<Tensor<F>> {
    let (batch, channels, inner) = check_channels(x, slope)?;
    let mut out = x.clone();
    let od = out.data_mut();
    for b in 0..batch {
        for c in 0..channels {
            let a = slope.data()[c];
            let base = (b * channels + c) * inner;
            for v in &mut od[base..base + inner] {
                if *v <= F::zero() {
                    *v = a * *v;
                }
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_slope)`. The slope gradient per channel is the sum
/// of `grad_out * x` over the non-positive positions, accumulated in f64.
pub fn prelu_backward<F: Scalar>(
    x: &Tensor<F>,
    slope: &Tensor<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let (batch, channels, inner) = check_channels(x, slope)?;
    if grad_out.dims() != x.dims() {
        return Err(Error::shape(
            "prelu_backward",
            format!("grad dims {:?}, expected {:?}", grad_out.dims(), x.dims()),
        ));
    }
    let mut grad_x = grad_out.clone();
    let mut grad_a = vec![0.0f64; channels];
    let gxd = grad_x.data_mut();
    let xd = x.data();
    for b in 0..batch {
        for c in 0..channels {
            let a = slope.data()[c];
            let base = (b * channels + c) * inner;
            let mut acc = 0.0f64;
            for i in base..base + inner {
                if xd[i] <= F::zero() {
                    acc += gxd[i].as_f64() * xd[i].as_f64();
                    gxd[i] = a * gxd[i];
                }
            }
            grad_a[c] += acc;
        }
    }
    let grad_slope = Tensor::new(vec![channels], grad_a.into_iter().map(F::of_f64).collect())?;
    Ok((grad_x, grad_slope))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::probe_gradient;
    use crate::rng::Rng;

    #[test]
    fn definition_at_negative_input() {
        let x = Tensor::new(vec![1, 1, 1], vec![-2.0f32]).unwrap();
        let a = Tensor::new(vec![1], vec![0.25f32]).unwrap();
        let y = prelu_forward(&x, &a).unwrap();
        assert_eq!(y.data()[0], -0.5);
    }

    #[test]
    fn zero_slope_degenerates_to_relu() {
        let x = Tensor::new(vec![1, 1, 4], vec![-3.0f32, -0.1, 0.0, 2.0]).unwrap();
        let a = Tensor::new(vec![1], vec![0.0f32]).unwrap();
        let y = prelu_forward(&x, &a).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn channel_mismatch_is_shape_error() {
        let x = Tensor::<f32>::ones(&[1, 3, 2]).unwrap();
        let a = Tensor::<f32>::ones(&[2]).unwrap();
        assert!(matches!(
            prelu_forward(&x, &a),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(11);
        let x: Tensor<f64> = rng.normal(&[2, 3, 10], 0.0, 1.0).unwrap();
        let a = Tensor::new(vec![3], vec![0.25f64, 0.1, 0.6]).unwrap();
        let v: Tensor<f64> = rng.normal(x.dims(), 0.0, 1.0).unwrap();
        let (gx, ga) = prelu_backward(&x, &a, &v).unwrap();

        let loss = |xx: &Tensor<f64>, aa: &Tensor<f64>| -> f64 {
            prelu_forward(xx, aa)
                .unwrap()
                .data()
                .iter()
                .zip(v.data())
                .map(|(y, c)| y * c)
                .sum()
        };
        let mut rng_p = Rng::new(5);
        let ex = probe_gradient(&mut |t| Ok(loss(t, &a)), &x, &gx, 32, &mut rng_p)
            .unwrap()
            .max_rel_err;
        let ea = probe_gradient(&mut |t| Ok(loss(&x, t)), &a, &ga, 32, &mut rng_p)
            .unwrap()
            .max_rel_err;
        assert!(ex <= 1e-4, "grad_x err {ex}");
        assert!(ea <= 1e-4, "grad_slope err {ea}");
    }
}
