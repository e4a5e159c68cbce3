//! Central finite differences for gradient verification.
//!
//! These helpers are the independent side of every backward check: they only
//! re-evaluate the forward map, never the analytic gradients they are used
//! to test. The loss is always reduced in `f64`.

use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Finite-difference tuning for one element type.
#[derive(Debug, Clone, Copy)]
pub struct FdSettings {
    /// Base step; scaled by `1 + |x|` per coordinate.
    pub step: f64,
    /// Absolute floor in the relative-error denominator, sized to the
    /// noise floor of the dtype so exact-zero gradients do not divide by zero.
    pub denom_floor: f64,
}

impl FdSettings {
    pub fn for_scalar<F: Scalar>() -> Self {
        if F::is_f32() {
            FdSettings {
                step: 1e-2,
                denom_floor: 3e-2,
            }
        } else {
            FdSettings {
                step: 5e-6,
                denom_floor: 1e-4,
            }
        }
    }
}

/// `|a - n| / max(|a|, |n|, floor)`
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference of `f` at one coordinate of `x`.
pub fn central_diff<F: Scalar>(
    f: &mut dyn FnMut(&Tensor<F>) -> Result<f64>,
    x: &Tensor<F>,
    coord: usize,
    settings: FdSettings,
) -> Result<f64> {
    Ok(sided_diffs(f, x, coord, settings.step)?.0)
}

/// `(central, one-sided forward, one-sided backward)` differences at one
/// coordinate for the given base step. Perturbed points are rounded to the
/// working precision first and their actual spacing is the denominator.
fn sided_diffs<F: Scalar>(
    f: &mut dyn FnMut(&Tensor<F>) -> Result<f64>,
    x: &Tensor<F>,
    coord: usize,
    step: f64,
) -> Result<(f64, f64, f64)> {
    let orig = x.data()[coord].as_f64();
    let h = step * (1.0 + orig.abs());
    let xp = F::of_f64(orig + h);
    let xm = F::of_f64(orig - h);
    let mut probe = x.clone();
    probe.data_mut()[coord] = xp;
    let plus = f(&probe)?;
    probe.data_mut()[coord] = xm;
    let minus = f(&probe)?;
    probe.data_mut()[coord] = x.data()[coord];
    let center = f(&probe)?;
    let central = (plus - minus) / (xp.as_f64() - xm.as_f64());
    let fwd = (plus - center) / (xp.as_f64() - orig);
    let bwd = (center - minus) / (orig - xm.as_f64());
    Ok((central, fwd, bwd))
}

/// Outcome of probing one tensor of analytic gradients.
#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub max_rel_err: f64,
    pub probes: usize,
}

/// Compare `analytic` against central differences of `f` at `count` randomly
/// chosen coordinates (all coordinates when the tensor is small enough).
///
/// Probes that straddle a non-differentiable point (an activation kink or a
/// pooling argmax switch) are rejected and redrawn, since a central
/// difference there measures a blend of two slopes rather than the
/// subgradient the backward pass commits to. Two tests catch them: the
/// one-sided differences must agree, and the central estimate must be stable
/// when the step shrinks fivefold.
pub fn probe_gradient<F: Scalar>(
    f: &mut dyn FnMut(&Tensor<F>) -> Result<f64>,
    x: &Tensor<F>,
    analytic: &Tensor<F>,
    count: usize,
    rng: &mut Rng,
) -> Result<ProbeReport> {
    probe_gradient_with(f, x, analytic, count, rng, FdSettings::for_scalar::<F>())
}

/// [`probe_gradient`] with explicit step settings (deep compositions use a
/// larger step to stay above their forward-evaluation noise floor).
pub fn probe_gradient_with<F: Scalar>(
    f: &mut dyn FnMut(&Tensor<F>) -> Result<f64>,
    x: &Tensor<F>,
    analytic: &Tensor<F>,
    count: usize,
    rng: &mut Rng,
    settings: FdSettings,
) -> Result<ProbeReport> {
    assert_eq!(x.dims(), analytic.dims(), "gradient dims must match input");
    // the stability test only pays off where kinks are plausible: the large
    // f32 step; the tiny f64 step almost never straddles one
    let two_scale = F::is_f32();
    let exhaustive = x.len() <= count;
    let mut max = 0.0f64;
    let mut valid = 0usize;
    let mut attempts = 0usize;
    let budget = if exhaustive { x.len() } else { count * 4 };
    while attempts < budget && (exhaustive || valid < count) {
        let c = if exhaustive {
            attempts
        } else {
            rng.range(x.len())
        };
        attempts += 1;
        let (central, fwd, bwd) = sided_diffs(f, x, c, settings.step)?;
        let scale = fwd.abs().max(bwd.abs()).max(settings.denom_floor);
        if (fwd - bwd).abs() > 0.1 * scale {
            continue; // kink inside the +/- h window
        }
        if two_scale {
            let (central_small, _, _) = sided_diffs(f, x, c, settings.step / 5.0)?;
            if (central - central_small).abs() > 0.05 * central.abs().max(central_small.abs()).max(settings.denom_floor) {
                continue; // estimate not step-stable: kink or noise dominated
            }
        }
        let e = rel_err(analytic.data()[c].as_f64(), central, settings.denom_floor);
        if e > max {
            max = e;
        }
        valid += 1;
    }
    if valid == 0 {
        return Err(crate::error::Error::Verification(
            "every finite-difference probe landed in a non-smooth neighborhood".into(),
        ));
    }
    Ok(ProbeReport {
        max_rel_err: max,
        probes: valid,
    })
}
