//! Angular-margin softmax on the hypersphere.
//!
//! Class weights are renormalized to unit rows before every evaluation and
//! carry no bias. For a feature `x` with label `y`, the target logit is
//! `‖x‖ ψ(θ_y)` where `θ_y` is the angle between `x` and the unit weight of
//! class `y` and `ψ` is the monotone piecewise extension of `cos(mθ)` to the
//! whole of `[0, π]`:
//!
//! ```text
//! ψ(θ) = (-1)^k cos(mθ) - 2k   for θ in [kπ/m, (k+1)π/m],  k = 0..m-1
//! ```
//!
//! Non-target logits stay `‖x‖ cos(θ_j)`. With an annealing weight `λ > 0`
//! the target logit blends as `(λ cos θ + ψ(θ)) / (1 + λ)`, which eases early
//! optimization; `λ = 0` is the pure margin form, and `m = 1, λ = 0` reduces
//! to the modified softmax (normalized weights, zero bias, no margin).
//!
//! Gradients are analytic, flow through the weight normalization map, and
//! use the left-segment derivative of `ψ` at segment joints.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Embedding batch: features `x: [N, D]` with one label per row.
#[derive(Debug, Clone)]
pub struct FeatureBatch<F: Scalar> {
    pub x: Tensor<F>,
    pub labels: Vec<usize>,
}

impl<F: Scalar> FeatureBatch<F> {
    pub fn new(x: Tensor<F>, labels: Vec<usize>) -> Result<Self> {
        if x.rank() != 2 {
            return Err(Error::shape(
                "feature_batch",
                format!("features must be [N, D], got {:?}", x.dims()),
            ));
        }
        if labels.len() != x.dims()[0] {
            return Err(Error::shape(
                "feature_batch",
                format!("{} labels for {} rows", labels.len(), x.dims()[0]),
            ));
        }
        Ok(FeatureBatch { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.dims()[1]
    }
}

/// One weight row per class, `[C, D]`; no biases by construction.
#[derive(Debug, Clone)]
pub struct ClassifierWeights<F: Scalar> {
    pub w: Tensor<F>,
}

impl<F: Scalar> ClassifierWeights<F> {
    pub fn new(w: Tensor<F>) -> Result<Self> {
        if w.rank() != 2 {
            return Err(Error::shape(
                "classifier_weights",
                format!("weights must be [C, D], got {:?}", w.dims()),
            ));
        }
        Ok(ClassifierWeights { w })
    }

    pub fn classes(&self) -> usize {
        self.w.dims()[0]
    }

    pub fn dim(&self) -> usize {
        self.w.dims()[1]
    }

    /// Unit-normalized rows and the original row norms.
    pub fn normalized(&self) -> Result<(Tensor<F>, Vec<F>)> {
        let (c, d) = (self.classes(), self.dim());
        let mut unit = self.w.clone();
        let mut norms = Vec::with_capacity(c);
        for j in 0..c {
            let row = &self.w.data()[j * d..(j + 1) * d];
            let norm = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
            if norm < f64::MIN_POSITIVE {
                return Err(Error::DegenerateInput(format!(
                    "class weight row {j} has zero norm"
                )));
            }
            let inv = F::of_f64(1.0 / norm);
            for v in &mut unit.data_mut()[j * d..(j + 1) * d] {
                *v *= inv;
            }
            norms.push(F::of_f64(norm));
        }
        Ok((unit, norms))
    }
}

/// Annealing schedule for the blend weight: `λ(t) = max(floor, initial * decay^t)`,
/// disabled entirely when `initial` is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaSchedule {
    pub initial: f64,
    pub floor: f64,
    pub decay: f64,
}

impl LambdaSchedule {
    pub fn disabled() -> Self {
        LambdaSchedule {
            initial: 0.0,
            floor: 0.0,
            decay: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial < self.floor || self.floor < 0.0 {
            return Err(Error::Config(format!(
                "lambda schedule needs initial >= floor >= 0, got initial {} floor {}",
                self.initial, self.floor
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config(format!(
                "lambda decay must be in (0, 1], got {}",
                self.decay
            )));
        }
        Ok(())
    }

    pub fn value(&self, iteration: u64) -> f64 {
        if self.initial <= 0.0 {
            return 0.0;
        }
        (self.initial * self.decay.powi(iteration.min(i32::MAX as u64) as i32)).max(self.floor)
    }
}

#[derive(Debug, Clone)]
pub struct AngularLossConfig<F: Scalar> {
    /// Integer margin; 1 through 4 are accepted.
    pub margin: u32,
    /// Current annealing weight λ; 0 disables blending.
    pub anneal_lambda: F,
    /// Schedule the harness uses to update `anneal_lambda` per iteration.
    pub lambda_schedule: LambdaSchedule,
    /// Interior clamp for cosines fed to arccos, keeping the angle
    /// differentiable at |cos| = 1.
    pub eps_angle: F,
}

impl<F: Scalar> AngularLossConfig<F> {
    pub fn new(margin: u32) -> Result<Self> {
        if !(1..=4).contains(&margin) {
            return Err(Error::Config(format!(
                "margin m must be in 1..=4, got {margin}"
            )));
        }
        Ok(AngularLossConfig {
            margin,
            anneal_lambda: F::zero(),
            lambda_schedule: LambdaSchedule::disabled(),
            eps_angle: F::of_f64(1e-7),
        })
    }

    pub fn with_lambda(mut self, lambda: F) -> Self {
        self.anneal_lambda = lambda;
        self
    }
}

/// Piecewise segment of θ for the ψ value: `min(floor(θ m / π), m-1)`.
fn psi_segment<F: Scalar>(theta: F, m: u32) -> usize {
    let t = (theta.as_f64() * m as f64) / std::f64::consts::PI;
    (t.floor() as usize).min(m as usize - 1)
}

fn check_theta<F: Scalar>(theta: F) -> Result<()> {
    let t = theta.as_f64();
    if !(0.0..=std::f64::consts::PI).contains(&t) {
        return Err(Error::domain(
            "psi",
            format!("theta {t} outside [0, pi]"),
        ));
    }
    Ok(())
}

/// `ψ(θ) = (-1)^k cos(mθ) - 2k` on segment `k`; equals `cos(mθ)` on `[0, π/m]`.
pub fn psi<F: Scalar>(theta: F, m: u32) -> Result<F> {
    check_theta(theta)?;
    let k = psi_segment(theta, m);
    let sign = if k % 2 == 0 { F::one() } else { -F::one() };
    Ok(sign * (theta * F::of_f64(m as f64)).cos() - F::of_f64(2.0 * k as f64))
}

/// Derivative of ψ; at a segment joint the left segment's derivative is used.
pub fn psi_dtheta<F: Scalar>(theta: F, m: u32) -> Result<F> {
    check_theta(theta)?;
    let t = (theta.as_f64() * m as f64) / std::f64::consts::PI;
    let mut k = t.floor() as usize;
    if k > 0 && t.floor() == t {
        k -= 1; // exact joint: left segment
    }
    let k = k.min(m as usize - 1);
    let sign = if k % 2 == 0 { F::one() } else { -F::one() };
    Ok(-sign * F::of_f64(m as f64) * (theta * F::of_f64(m as f64)).sin())
}

/// Angle matrix `θ_{i,j} = arccos(⟨x_i, ŵ_j⟩ / ‖x_i‖)` in `[0, π]`, `[N, C]`.
/// Cosines are clamped to `[-1, 1]` exactly (no interior clamp: this is the
/// diagnostic angle, not the differentiable path).
pub fn angles<F: Scalar>(
    batch: &FeatureBatch<F>,
    w: &ClassifierWeights<F>,
) -> Result<Tensor<F>> {
    if batch.dim() != w.dim() {
        return Err(Error::shape(
            "angles",
            format!(
                "feature dim {} does not match weight dim {}",
                batch.dim(),
                w.dim()
            ),
        ));
    }
    let (unit, _) = w.normalized()?;
    let n = batch.len();
    let norms = row_norms(&batch.x)?;
    let u = batch.x.matmul_nt(&unit)?;
    let c_n = w.classes();
    let mut out = Tensor::zeros(&[n, c_n])?;
    for i in 0..n {
        let inv_r = F::one() / norms[i];
        for j in 0..c_n {
            let cos = crate::tensor::ops::clamp_unit(u.at(&[i, j]) * inv_r);
            out.set(&[i, j], cos.acos());
        }
    }
    Ok(out)
}

/// Row norms of `[N, D]` features; zero rows are degenerate.
fn row_norms<F: Scalar>(x: &Tensor<F>) -> Result<Vec<F>> {
    let (n, d) = (x.dims()[0], x.dims()[1]);
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let row = &x.data()[i * d..(i + 1) * d];
        let norm = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
        if norm < f64::MIN_POSITIVE {
            return Err(Error::DegenerateInput(format!(
                "feature row {i} has zero norm"
            )));
        }
        norms.push(F::of_f64(norm));
    }
    Ok(norms)
}

/// Everything the backward pass needs, saved by the forward pass.
#[derive(Debug, Clone)]
pub struct AsoftmaxForward<F: Scalar> {
    pub loss: F,
    /// Logits with the margin applied at the label position, `[N, C]`.
    pub logits: Tensor<F>,
    pub per_sample_loss: Vec<F>,
    probs: Tensor<F>,
    r: Vec<F>,
    /// d(target logit)/d(target inner product) per sample.
    du_coef: Vec<F>,
    /// d(target logit)/d‖x‖ per sample.
    dr_coef: Vec<F>,
    w_unit: Tensor<F>,
    w_norms: Vec<F>,
}

fn validate_inputs<F: Scalar>(
    batch: &FeatureBatch<F>,
    w: &ClassifierWeights<F>,
) -> Result<()> {
    if batch.dim() != w.dim() {
        return Err(Error::shape(
            "asoftmax",
            format!(
                "feature dim {} does not match weight dim {}",
                batch.dim(),
                w.dim()
            ),
        ));
    }
    if !batch.x.all_finite() || !w.w.all_finite() {
        return Err(Error::Numeric(
            "non-finite value in asoftmax inputs".into(),
        ));
    }
    let c = w.classes();
    for (i, &y) in batch.labels.iter().enumerate() {
        if y >= c {
            return Err(Error::Input(format!(
                "label {y} at row {i} out of range for {c} classes"
            )));
        }
    }
    Ok(())
}

/// Forward pass of the angular-margin loss with max-subtraction
/// stabilization. Returns the loss, the margin logits, and the saved state.
pub fn asoftmax_forward<F: Scalar>(
    batch: &FeatureBatch<F>,
    w: &ClassifierWeights<F>,
    cfg: &AngularLossConfig<F>,
) -> Result<AsoftmaxForward<F>> {
    validate_inputs(batch, w)?;
    if !(1..=4).contains(&cfg.margin) {
        return Err(Error::Config(format!(
            "margin m must be in 1..=4, got {}",
            cfg.margin
        )));
    }
    let lambda = cfg.anneal_lambda;
    if lambda < F::zero() {
        return Err(Error::Config(format!(
            "anneal lambda must be non-negative, got {lambda}"
        )));
    }
    let (n, c) = (batch.len(), w.classes());
    let (w_unit, w_norms) = w.normalized()?;
    let r = row_norms(&batch.x)?;
    // u[i][j] = <x_i, w_hat_j>, 64-bit partial sums inside matmul
    let mut z = batch.x.matmul_nt(&w_unit)?;
    let one = F::one();
    let blend = one / (one + lambda);
    let cos_cap = one - cfg.eps_angle;

    let mut du_coef = vec![F::zero(); n];
    let mut dr_coef = vec![F::zero(); n];
    for i in 0..n {
        let y = batch.labels[i];
        let u_y = z.at(&[i, y]);
        let c_raw = u_y / r[i];
        let clamped = c_raw > cos_cap || c_raw < -cos_cap;
        let c_hat = if c_raw > cos_cap {
            cos_cap
        } else if c_raw < -cos_cap {
            -cos_cap
        } else {
            c_raw
        };
        let theta = c_hat.acos();
        let psi_v = psi(theta, cfg.margin)?;
        // dψ/dcos, gated off when the clamp is active
        let g = if clamped {
            F::zero()
        } else {
            -psi_dtheta(theta, cfg.margin)? / (one - c_hat * c_hat).sqrt()
        };
        z.set(&[i, y], (lambda * u_y + r[i] * psi_v) * blend);
        du_coef[i] = (lambda + g) * blend;
        dr_coef[i] = (psi_v - g * c_raw) * blend;
    }

    // stabilized softmax + mean NLL
    let mut probs = Tensor::zeros(&[n, c])?;
    let mut per_sample_loss = Vec::with_capacity(n);
    let mut total = 0.0f64;
    for i in 0..n {
        let row = z.row(i);
        let m = row.iter().fold(F::neg_infinity(), |a, &b| if b > a { b } else { a });
        let mut denom = 0.0f64;
        for &v in row {
            denom += (v - m).exp().as_f64();
        }
        let lse = m.as_f64() + denom.ln();
        let li = lse - z.at(&[i, batch.labels[i]]).as_f64();
        per_sample_loss.push(F::of_f64(li));
        total += li;
        for j in 0..c {
            probs.set(&[i, j], F::of_f64((z.at(&[i, j]).as_f64() - lse).exp()));
        }
    }
    let loss = F::of_f64(total / n as f64);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("asoftmax loss is {loss}")));
    }

    Ok(AsoftmaxForward {
        loss,
        logits: z,
        per_sample_loss,
        probs,
        r,
        du_coef,
        dr_coef,
        w_unit,
        w_norms,
    })
}

/// Convenience wrapper returning just `(loss, logits)`.
pub fn asoftmax_loss<F: Scalar>(
    batch: &FeatureBatch<F>,
    w: &ClassifierWeights<F>,
    cfg: &AngularLossConfig<F>,
) -> Result<(F, Tensor<F>)> {
    let fwd = asoftmax_forward(batch, w, cfg)?;
    Ok((fwd.loss, fwd.logits))
}

/// Analytic gradients of the stabilized loss wrt features and raw weights.
pub fn asoftmax_backward<F: Scalar>(
    batch: &FeatureBatch<F>,
    w: &ClassifierWeights<F>,
    _cfg: &AngularLossConfig<F>,
    fwd: &AsoftmaxForward<F>,
) -> Result<(Tensor<F>, Tensor<F>)> {
    let (n, c, d) = (batch.len(), w.classes(), w.dim());
    let inv_n = F::of_f64(1.0 / n as f64);

    // dL/dz then fold the target coefficient into the u-gradient
    let mut gu = fwd.probs.clone();
    let mut gr = vec![F::zero(); n];
    for i in 0..n {
        let y = batch.labels[i];
        let dz_y = (fwd.probs.at(&[i, y]) - F::one()) * inv_n;
        gr[i] = dz_y * fwd.dr_coef[i];
        for j in 0..c {
            let v = if j == y {
                dz_y * fwd.du_coef[i]
            } else {
                fwd.probs.at(&[i, j]) * inv_n
            };
            gu.set(&[i, j], v);
        }
    }

    // grad_x = gu * w_unit + gr ⊗ x / r
    let mut grad_x = gu.matmul(&fwd.w_unit)?;
    for i in 0..n {
        let scale = gr[i] / fwd.r[i];
        let row = &batch.x.data()[i * d..(i + 1) * d];
        for (gx, &xv) in grad_x.data_mut()[i * d..(i + 1) * d].iter_mut().zip(row) {
            *gx += scale * xv;
        }
    }

    // grad wrt unit rows, then through the normalization map:
    // grad_w_j = (grad_ŵ_j - ŵ_j ⟨ŵ_j, grad_ŵ_j⟩) / ‖w_j‖
    let g_unit = gu.matmul_tn(&batch.x)?;
    let mut grad_w = Tensor::zeros(&[c, d])?;
    for j in 0..c {
        let gu_row = &g_unit.data()[j * d..(j + 1) * d];
        let w_row = &fwd.w_unit.data()[j * d..(j + 1) * d];
        let dot: f64 = gu_row
            .iter()
            .zip(w_row)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum();
        let dot = F::of_f64(dot);
        let inv_norm = F::one() / fwd.w_norms[j];
        for ((gw, &g), &wr) in grad_w.data_mut()[j * d..(j + 1) * d]
            .iter_mut()
            .zip(gu_row)
            .zip(w_row)
        {
            *gw = (g - wr * dot) * inv_norm;
        }
    }
    Ok((grad_x, grad_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::probe_gradient;
    use crate::rng::Rng;
    use std::f64::consts::PI;

    fn batch_from(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> FeatureBatch<f64> {
        let n = rows.len();
        let d = rows[0].len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        FeatureBatch::new(Tensor::new(vec![n, d], data).unwrap(), labels).unwrap()
    }

    fn weights_from(rows: Vec<Vec<f64>>) -> ClassifierWeights<f64> {
        let c = rows.len();
        let d = rows[0].len();
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        ClassifierWeights::new(Tensor::new(vec![c, d], data).unwrap()).unwrap()
    }

    #[test]
    fn angles_of_parallel_orthogonal_antiparallel() {
        let w = weights_from(vec![vec![2.0, 0.0]]); // non-unit row: normalization handles it
        let batch = batch_from(
            vec![vec![3.0, 0.0], vec![0.0, 1.0], vec![-0.5, 0.0]],
            vec![0, 0, 0],
        );
        let a = angles(&batch, &w).unwrap();
        assert!(a.at(&[0, 0]).abs() < 1e-12);
        assert!((a.at(&[1, 0]) - PI / 2.0).abs() < 1e-12);
        assert!((a.at(&[2, 0]) - PI).abs() < 1e-12);
    }

    #[test]
    fn zero_norm_feature_names_row() {
        let w = weights_from(vec![vec![1.0, 0.0]]);
        let batch = batch_from(vec![vec![1.0, 0.0], vec![0.0, 0.0]], vec![0, 0]);
        let err = angles(&batch, &w).unwrap_err();
        assert!(err.to_string().contains("row 1"), "{err}");
    }

    #[test]
    fn psi_reduces_to_cos_for_m1() {
        for i in 0..100 {
            let theta = (PI * i as f64 / 99.0).min(PI);
            assert!((psi(theta, 1).unwrap() - theta.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_at_zero_is_one() {
        for m in 1..=4 {
            assert_eq!(psi(0.0, m).unwrap(), 1.0);
        }
    }

    #[test]
    fn psi_m4_at_half_pi() {
        // k = 2 there: cos(2π) - 4 = -3
        let v = psi(PI / 2.0, 4).unwrap();
        assert!((v - (-3.0)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn psi_rejects_out_of_domain() {
        assert!(matches!(psi(-0.1, 2), Err(Error::Domain { .. })));
        assert!(matches!(psi(PI + 0.1, 2), Err(Error::Domain { .. })));
    }

    #[test]
    fn psi_continuous_and_strictly_decreasing() {
        for m in 1..=4u32 {
            // continuity at joints sampled +/- 1e-9
            for k in 1..m as usize {
                let joint = k as f64 * PI / m as f64;
                let left = psi(joint - 1e-9, m).unwrap();
                let right = psi(joint + 1e-9, m).unwrap();
                assert!((left - right).abs() <= 1e-6, "m={m} joint {k}: {left} vs {right}");
            }
            // strict decrease over a dense grid
            let grid = 10_000;
            let mut prev = psi(0.0, m).unwrap();
            for i in 1..=grid {
                let theta = (PI * i as f64 / grid as f64).min(PI);
                let v = psi(theta, m).unwrap();
                assert!(v < prev, "m={m}: psi not strictly decreasing at theta={theta}");
                prev = v;
            }
        }
    }

    #[test]
    fn psi_bounded_above_by_cos() {
        for m in 2..=4u32 {
            for i in 1..10_000 {
                let theta = (PI * i as f64 / 10_000.0).min(PI);
                assert!(psi(theta, m).unwrap() < theta.cos() + 1e-15);
            }
        }
    }

    fn orthogonal_two_class(margin: u32) -> f64 {
        let w = weights_from(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let batch = batch_from(vec![vec![1.0, 0.0]], vec![0]);
        let cfg = AngularLossConfig::new(margin).unwrap();
        asoftmax_loss(&batch, &w, &cfg).unwrap().0
    }

    #[test]
    fn closed_form_orthogonal_two_class() {
        let want = (1.0 + (-1.0f64).exp()).ln();
        assert!((orthogonal_two_class(1) - want).abs() <= 1e-6);
        // the margin is inactive at theta = 0, so m = 4 gives the same loss
        assert!((orthogonal_two_class(4) - want).abs() <= 1e-6);
    }

    #[test]
    fn closed_form_equiangular_is_ln_c() {
        for c in [2usize, 3, 5, 7] {
            let d = c;
            let mut wrows = vec![vec![0.0; d]; c];
            for (j, row) in wrows.iter_mut().enumerate() {
                row[j] = 1.0;
            }
            let w = weights_from(wrows);
            let x = vec![1.0 / (c as f64).sqrt(); d];
            let batch = batch_from(vec![x], vec![0]);
            let cfg = AngularLossConfig::new(1).unwrap();
            let (loss, _) = asoftmax_loss(&batch, &w, &cfg).unwrap();
            assert!(
                (loss - (c as f64).ln()).abs() <= 1e-6,
                "C={c}: {loss} vs {}",
                (c as f64).ln()
            );
        }
    }

    #[test]
    fn saturated_sample_has_vanishing_gradients() {
        let w = weights_from(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let batch = batch_from(vec![vec![50.0, 0.0]], vec![0]);
        let cfg = AngularLossConfig::new(1).unwrap();
        let fwd = asoftmax_forward(&batch, &w, &cfg).unwrap();
        assert!(fwd.loss.abs() < 1e-12);
        let (gx, gw) = asoftmax_backward(&batch, &w, &cfg, &fwd).unwrap();
        assert!(gx.data().iter().all(|v| v.abs() < 1e-12));
        assert!(gw.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn nan_input_is_numeric_error() {
        let w = weights_from(vec![vec![1.0, 0.0]]);
        let batch = batch_from(vec![vec![f64::NAN, 1.0]], vec![0]);
        let cfg = AngularLossConfig::new(1).unwrap();
        assert!(matches!(
            asoftmax_loss(&batch, &w, &cfg),
            Err(Error::Numeric(_))
        ));
    }

    /// Place target angles in every ψ segment for every margin and check the
    /// analytic gradients against central differences.
    #[test]
    fn gradients_match_finite_differences_across_segments() {
        let d = 6;
        for m in 1..=4u32 {
            for seg in 0..m {
                let theta = (seg as f64 + 0.5) * PI / m as f64;
                let mut rng = Rng::new(1000 + (m * 10 + seg) as u64);
                // class-0 weight along e0; feature at the chosen angle in the (e0, e1) plane
                let mut wrows = vec![vec![0.0; d]; 3];
                wrows[0][0] = 1.0;
                for (j, row) in wrows.iter_mut().enumerate().skip(1) {
                    for v in row.iter_mut() {
                        *v = rng.next_normal();
                    }
                    row[j] += 2.0;
                }
                let w = weights_from(wrows);
                let radius = 1.7;
                let mut xrow = vec![0.0; d];
                xrow[0] = radius * theta.cos();
                xrow[1] = radius * theta.sin();
                let mut rows = vec![xrow];
                for _ in 0..3 {
                    rows.push((0..d).map(|_| rng.next_normal()).collect());
                }
                let batch = batch_from(rows, vec![0, 1, 2, 0]);
                let cfg = AngularLossConfig::new(m).unwrap().with_lambda(
                    if seg % 2 == 0 { 0.0 } else { 3.0 },
                );

                let fwd = asoftmax_forward(&batch, &w, &cfg).unwrap();
                let (gx, gw) = asoftmax_backward(&batch, &w, &cfg, &fwd).unwrap();

                let mut fx = |t: &Tensor<f64>| {
                    let b = FeatureBatch::new(t.clone(), batch.labels.clone()).unwrap();
                    Ok(asoftmax_loss(&b, &w, &cfg).unwrap().0)
                };
                let mut rng_p = Rng::new(9);
                let ex = probe_gradient(&mut fx, &batch.x, &gx, 48, &mut rng_p)
                    .unwrap()
                    .max_rel_err;
                assert!(ex <= 1e-4, "m={m} seg={seg}: grad_x err {ex}");

                let mut fw = |t: &Tensor<f64>| {
                    let ww = ClassifierWeights::new(t.clone()).unwrap();
                    Ok(asoftmax_loss(&batch, &ww, &cfg).unwrap().0)
                };
                let ew = probe_gradient(&mut fw, &w.w, &gw, 48, &mut rng_p)
                    .unwrap()
                    .max_rel_err;
                assert!(ew <= 1e-4, "m={m} seg={seg}: grad_w err {ew}");
            }
        }
    }

    #[test]
    fn scale_monotonicity_for_correct_sample() {
        // correctly classified sample: growing ‖x‖ strictly lowers its loss
        let w = weights_from(vec![vec![1.0, 0.1], vec![-0.3, 1.0], vec![0.4, -0.8]]);
        let cfg = AngularLossConfig::new(4).unwrap();
        let direction = [0.95, 0.08];
        let mut prev = f64::INFINITY;
        for r in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let batch = batch_from(vec![vec![direction[0] * r, direction[1] * r]], vec![0]);
            let fwd = asoftmax_forward(&batch, &w, &cfg).unwrap();
            assert!(
                fwd.per_sample_loss[0] < prev,
                "loss did not decrease at r={r}"
            );
            prev = fwd.per_sample_loss[0];
        }
    }

    #[test]
    fn loss_invariant_under_common_rotation() {
        let mut rng = Rng::new(55);
        let x: Tensor<f64> = rng.normal(&[6, 8], 0.0, 1.0).unwrap();
        let wt: Tensor<f64> = rng.normal(&[4, 8], 0.0, 1.0).unwrap();
        let labels = vec![0, 1, 2, 3, 1, 2];
        let cfg = AngularLossConfig::new(3).unwrap().with_lambda(0.7);
        let base = asoftmax_loss(
            &FeatureBatch::new(x.clone(), labels.clone()).unwrap(),
            &ClassifierWeights::new(wt.clone()).unwrap(),
            &cfg,
        )
        .unwrap()
        .0;

        // random rotation as a product of Givens rotations applied to both
        let mut xr = x;
        let mut wr = wt;
        for _ in 0..20 {
            let i = rng.range(8);
            let mut j = rng.range(8);
            if i == j {
                j = (j + 1) % 8;
            }
            let alpha = rng.next_f64() * std::f64::consts::TAU;
            for t in [&mut xr, &mut wr] {
                let rows = t.dims()[0];
                for r in 0..rows {
                    let a = t.at(&[r, i]);
                    let b = t.at(&[r, j]);
                    t.set(&[r, i], alpha.cos() * a - alpha.sin() * b);
                    t.set(&[r, j], alpha.sin() * a + alpha.cos() * b);
                }
            }
        }
        let rotated = asoftmax_loss(
            &FeatureBatch::new(xr, labels).unwrap(),
            &ClassifierWeights::new(wr).unwrap(),
            &cfg,
        )
        .unwrap()
        .0;
        assert!(
            (base - rotated).abs() <= 1e-5,
            "loss changed under rotation: {base} vs {rotated}"
        );
    }

    #[test]
    fn prediction_rule_equivalence() {
        // argmax of margin-free logits == argmin of angles
        let mut rng = Rng::new(90);
        let x: Tensor<f64> = rng.normal(&[10, 5], 0.0, 2.0).unwrap();
        let wt: Tensor<f64> = rng.normal(&[4, 5], 0.0, 1.0).unwrap();
        let w = ClassifierWeights::new(wt).unwrap();
        let batch = FeatureBatch::new(x, vec![0; 10]).unwrap();
        let (unit, _) = w.normalized().unwrap();
        let logits = batch.x.matmul_nt(&unit).unwrap();
        let theta = angles(&batch, &w).unwrap();
        for i in 0..10 {
            let by_logit = logits
                .row(i)
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            let by_angle = theta
                .row(i)
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert_eq!(by_logit, by_angle, "row {i}");
        }
    }

    #[test]
    fn lambda_schedule_decays_to_floor() {
        let s = LambdaSchedule {
            initial: 1000.0,
            floor: 5.0,
            decay: 0.9,
        };
        s.validate().unwrap();
        assert_eq!(s.value(0), 1000.0);
        assert!(s.value(10) < 1000.0 * 0.9f64.powi(9) + 1e-9);
        assert_eq!(s.value(10_000), 5.0);
        assert_eq!(LambdaSchedule::disabled().value(3), 0.0);
    }
}
