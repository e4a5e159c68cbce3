//! Batch normalization over `(B, T, H, W)` per channel.
//!
//! Train mode normalizes by the biased batch statistics and folds them into
//! the running estimates with `running = (1 - momentum) * running +
//! momentum * batch`; eval mode normalizes by the running estimates.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct BatchNorm3dParams<F: Scalar> {
    pub gamma: Tensor<F>,
    pub beta: Tensor<F>,
    pub running_mean: Tensor<F>,
    pub running_var: Tensor<F>,
    pub momentum: F,
    pub eps: F,
}

impl<F: Scalar> BatchNorm3dParams<F> {
    pub fn new(channels: usize, momentum: F, eps: F) -> Result<Self> {
        if momentum <= F::zero() || momentum > F::one() {
            return Err(Error::Config(format!(
                "batchnorm momentum must be in (0, 1], got {momentum}"
            )));
        }
        if eps <= F::zero() {
            return Err(Error::Config(format!(
                "batchnorm eps must be positive, got {eps}"
            )));
        }
        Ok(BatchNorm3dParams {
            gamma: Tensor::ones(&[channels])?,
            beta: Tensor::zeros(&[channels])?,
            running_mean: Tensor::zeros(&[channels])?,
            running_var: Tensor::ones(&[channels])?,
            momentum,
            eps,
        })
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Per-channel batch statistics saved by the train-mode forward pass.
#[derive(Debug, Clone)]
pub struct BnBatchStats<F: Scalar> {
    pub mean: Vec<F>,
    pub var: Vec<F>,
}

fn check_input<F: Scalar>(x: &Tensor<F>, channels: usize) -> Result<(usize, usize)> {
    if x.rank() < 2 || x.dims()[1] != channels {
        return Err(Error::shape(
            "batchnorm3d",
            format!("input {:?} does not match {channels} channels", x.dims()),
        ));
    }
    let batch = x.dims()[0];
    let inner: usize = x.dims()[2..].iter().product();
    Ok((batch, inner))
}

/// Train-mode forward: returns the output and the batch statistics, and
/// updates the running estimates.
pub fn batchnorm3d_forward<F: Scalar>(
    x: &Tensor<F>,
    p: &mut BatchNorm3dParams<F>,
) -> Result<(Tensor<F>, BnBatchStats<F>)> {
    let channels = p.channels();
    let (batch, inner) = check_input(x, channels)?;
    let pop = batch * inner;
    if pop < 2 {
        return Err(Error::Config(format!(
            "batchnorm train mode needs a population of at least 2 per channel, got {pop}"
        )));
    }
    let xd = x.data();
    let mut mean = vec![F::zero(); channels];
    let mut var = vec![F::zero(); channels];
    for c in 0..channels {
        let mut acc = 0.0f64;
        for b in 0..batch {
            let base = (b * channels + c) * inner;
            for &v in &xd[base..base + inner] {
                acc += v.as_f64();
            }
        }
        let m = acc / pop as f64;
        let mut acc2 = 0.0f64;
        for b in 0..batch {
            let base = (b * channels + c) * inner;
            for &v in &xd[base..base + inner] {
                let d = v.as_f64() - m;
                acc2 += d * d;
            }
        }
        mean[c] = F::of_f64(m);
        var[c] = F::of_f64(acc2 / pop as f64);
    }

    let mut out = x.clone();
    let od = out.data_mut();
    for c in 0..channels {
        let inv_std = (var[c] + p.eps).sqrt().recip();
        let (g, bta, m) = (p.gamma.data()[c], p.beta.data()[c], mean[c]);
        for b in 0..batch {
            let base = (b * channels + c) * inner;
            for v in &mut od[base..base + inner] {
                *v = g * ((*v - m) * inv_std) + bta;
            }
        }
    }

    let mom = p.momentum;
    let keep = F::one() - mom;
    // running_var stays strictly positive even if a batch variance is zero
    let floor = F::min_positive_value();
    for c in 0..channels {
        p.running_mean.data_mut()[c] = keep * p.running_mean.data()[c] + mom * mean[c];
        let next = keep * p.running_var.data()[c] + mom * var[c];
        p.running_var.data_mut()[c] = if next > floor { next } else { floor };
    }

    Ok((out, BnBatchStats { mean, var }))
}

/// Eval-mode forward using the running statistics.
pub fn batchnorm3d_eval<F: Scalar>(
    x: &Tensor<F>,
    p: &BatchNorm3dParams<F>,
) -> Result<Tensor<F>> {
    let channels = p.channels();
    let (batch, inner) = check_input(x, channels)?;
    let mut out = x.clone();
    let od = out.data_mut();
    for c in 0..channels {
        let inv_std = (p.running_var.data()[c] + p.eps).sqrt().recip();
        let (g, bta, m) = (p.gamma.data()[c], p.beta.data()[c], p.running_mean.data()[c]);
        for b in 0..batch {
            let base = (b * channels + c) * inner;
            for v in &mut od[base..base + inner] {
                *v = g * ((*v - m) * inv_std) + bta;
            }
        }
    }
    Ok(out)
}

/// Train-mode backward through the batch statistics.
/// Returns `(grad_x, grad_gamma, grad_beta)`.
pub fn batchnorm3d_backward<F: Scalar>(
    x: &Tensor<F>,
    gamma: &Tensor<F>,
    eps: F,
    stats: &BnBatchStats<F>,
    grad_out: &Tensor<F>,
) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>)> {
    let channels = gamma.len();
    let (batch, inner) = check_input(x, channels)?;
    if grad_out.dims() != x.dims() {
        return Err(Error::shape(
            "batchnorm3d_backward",
            format!("grad dims {:?}, expected {:?}", grad_out.dims(), x.dims()),
        ));
    }
    let pop = (batch * inner) as f64;
    let xd = x.data();
    let gd = grad_out.data();
    let mut grad_x = Tensor::zeros(x.dims())?;
    let gxd = grad_x.data_mut();
    let mut grad_gamma = vec![F::zero(); channels];
    let mut grad_beta = vec![F::zero(); channels];

    for c in 0..channels {
        let m = stats.mean[c].as_f64();
        let inv_std = 1.0 / (stats.var[c].as_f64() + eps.as_f64()).sqrt();
        let g = gamma.data()[c].as_f64();

        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for b in 0..batch {
            let base = (b * channels + c) * inner;
            for i in base..base + inner {
                let xhat = (xd[i].as_f64() - m) * inv_std;
                let dy = gd[i].as_f64();
                sum_dy += dy;
                sum_dy_xhat += dy * xhat;
            }
        }
        grad_beta[c] = F::of_f64(sum_dy);
        grad_gamma[c] = F::of_f64(sum_dy_xhat);

        let mean_dy = sum_dy / pop;
        let mean_dy_xhat = sum_dy_xhat / pop;
        for b in 0..batch {
            let base = (b * channels + c) * inner;
            for i in base..base + inner {
                let xhat = (xd[i].as_f64() - m) * inv_std;
                let dy = gd[i].as_f64();
                gxd[i] = F::of_f64(g * inv_std * (dy - mean_dy - xhat * mean_dy_xhat));
            }
        }
    }

    Ok((
        grad_x,
        Tensor::new(vec![channels], grad_gamma)?,
        Tensor::new(vec![channels], grad_beta)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::probe_gradient;
    use crate::rng::Rng;

    #[test]
    fn train_mode_normalizes_each_channel() {
        let mut rng = Rng::new(31);
        let x: Tensor<f64> = rng.normal(&[4, 3, 2, 3, 3], 1.5, 2.0).unwrap();
        let mut p = BatchNorm3dParams::new(3, 0.1, 1e-5).unwrap();
        let (y, _) = batchnorm3d_forward(&x, &mut p).unwrap();
        let inner = 2 * 3 * 3;
        for c in 0..3 {
            let mut vals = Vec::new();
            for b in 0..4 {
                let base = (b * 3 + c) * inner;
                vals.extend_from_slice(&y.data()[base..base + inner]);
            }
            let n = vals.len() as f64;
            let mean: f64 = vals.iter().sum::<f64>() / n;
            let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-4, "channel {c} mean {mean}");
            assert!((var - 1.0).abs() < 1e-3, "channel {c} var {var}");
        }
    }

    #[test]
    fn constant_channel_yields_beta() {
        let x = Tensor::<f32>::full(&[2, 1, 2, 2, 2], 5.0).unwrap();
        let mut p = BatchNorm3dParams::new(1, 0.1, 1e-5).unwrap();
        p.beta.data_mut()[0] = 0.75;
        let (y, _) = batchnorm3d_forward(&x, &mut p).unwrap();
        for &v in y.data() {
            assert_eq!(v, 0.75);
        }
        assert!(p.running_var.data()[0] > 0.0);
    }

    #[test]
    fn tiny_population_rejected() {
        let x = Tensor::<f32>::ones(&[1, 2, 1, 1, 1]).unwrap();
        let mut p = BatchNorm3dParams::new(2, 0.1, 1e-5).unwrap();
        assert!(matches!(
            batchnorm3d_forward(&x, &mut p),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn eval_uses_running_stats() {
        let mut rng = Rng::new(8);
        let x: Tensor<f64> = rng.normal(&[2, 2, 2, 2, 2], 0.0, 1.0).unwrap();
        let mut p = BatchNorm3dParams::new(2, 1.0, 1e-5).unwrap();
        let (train_y, _) = batchnorm3d_forward(&x, &mut p).unwrap();
        // with momentum 1 the running stats equal the batch stats
        let eval_y = batchnorm3d_eval(&x, &p).unwrap();
        for (a, b) in train_y.iter().zip(eval_y.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn fd_errors<F: Scalar>() -> (f64, f64, f64) {
        let mut rng = Rng::new(13);
        let x: Tensor<F> = rng.normal(&[3, 2, 2, 3, 3], F::zero(), F::one()).unwrap();
        let gamma: Tensor<F> = rng.normal(&[2], F::one(), F::of_f64(0.2)).unwrap();
        let beta: Tensor<F> = rng.normal(&[2], F::zero(), F::of_f64(0.2)).unwrap();
        let eps = F::of_f64(1e-5);
        let v: Tensor<F> = rng.normal(x.dims(), F::zero(), F::one()).unwrap();

        let run = |xx: &Tensor<F>, gg: &Tensor<F>, bb: &Tensor<F>| -> (Tensor<F>, BnBatchStats<F>) {
            let mut p = BatchNorm3dParams::new(2, F::of_f64(0.1), eps).unwrap();
            p.gamma = gg.clone();
            p.beta = bb.clone();
            batchnorm3d_forward(xx, &mut p).unwrap()
        };
        let loss = |xx: &Tensor<F>, gg: &Tensor<F>, bb: &Tensor<F>| -> f64 {
            let (y, _) = run(xx, gg, bb);
            y.data()
                .iter()
                .zip(v.data())
                .map(|(a, c)| a.as_f64() * c.as_f64())
                .sum()
        };

        let (_, stats) = run(&x, &gamma, &beta);
        let (gx, ggamma, gbeta) = batchnorm3d_backward(&x, &gamma, eps, &stats, &v).unwrap();

        let mut rng_p = Rng::new(3);
        let ex = probe_gradient(&mut |t| Ok(loss(t, &gamma, &beta)), &x, &gx, 32, &mut rng_p)
            .unwrap()
            .max_rel_err;
        let eg = probe_gradient(&mut |t| Ok(loss(&x, t, &beta)), &gamma, &ggamma, 32, &mut rng_p)
            .unwrap()
            .max_rel_err;
        let eb = probe_gradient(&mut |t| Ok(loss(&x, &gamma, t)), &beta, &gbeta, 32, &mut rng_p)
            .unwrap()
            .max_rel_err;
        (ex, eg, eb)
    }

    #[test]
    fn backward_matches_finite_differences_f64() {
        let (ex, eg, eb) = fd_errors::<f64>();
        assert!(ex <= 1e-5, "grad_x err {ex}");
        assert!(eg <= 1e-5, "grad_gamma err {eg}");
        assert!(eb <= 1e-5, "grad_beta err {eb}");
    }

    #[test]
    fn backward_matches_finite_differences_f32() {
        let (ex, eg, eb) = fd_errors::<f32>();
        assert!(ex <= 1e-3, "grad_x err {ex}");
        assert!(eg <= 1e-3, "grad_gamma err {eg}");
        assert!(eb <= 1e-3, "grad_beta err {eb}");
    }
}
