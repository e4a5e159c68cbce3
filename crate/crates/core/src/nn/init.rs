//! Weight initialization: fan-in-scaled normal draws with the gain adjusted
//! for the negative-side slope of the activation (He-style).

use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `sqrt(2 / (1 + slope^2))`; `slope = 0` gives the ReLU gain `sqrt(2)`,
/// `slope = 1` the linear gain `1`.
pub fn activation_gain(negative_slope: f64) -> f64 {
    (2.0 / (1.0 + negative_slope * negative_slope)).sqrt()
}

/// Normal draws with std `gain / sqrt(fan_in)`.
pub fn he_normal<F: Scalar>(
    rng: &mut Rng,
    dims: &[usize],
    fan_in: usize,
    gain: f64,
) -> Result<Tensor<F>> {
    let std = gain / (fan_in as f64).sqrt();
    rng.normal(dims, F::zero(), F::of_f64(std))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gain_endpoints() {
        assert!((activation_gain(0.0) - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((activation_gain(1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn std_scales_with_fan_in() {
        let mut rng = Rng::new(1);
        let t: Tensor<f64> = he_normal(&mut rng, &[64, 100], 100, 1.0).unwrap();
        let var: f64 = t.iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        assert!((var - 0.01).abs() < 0.002, "var {var}");
    }
}
