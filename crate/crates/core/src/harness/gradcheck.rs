//! Gradient verification suites.
//!
//! Each scope re-derives gradients by central finite differences and
//! compares them against the analytic backward passes: the loss head across
//! every margin and ψ segment, each layer kind, or a whole desk-scale model.
//! The CLI runs them in double precision (the verification mode); the same
//! suites run in single precision with relaxed tolerances.

use crate::check::probe_gradient;
use crate::error::{Error, Result};
use crate::loss::{
    asoftmax_backward, asoftmax_forward, asoftmax_loss, AngularLossConfig, ClassifierWeights,
    FeatureBatch,
};
use crate::model::{build_model, preset, ClipDims, HeadKind, Model};
use crate::nn::batchnorm::{batchnorm3d_backward, batchnorm3d_forward, BatchNorm3dParams};
use crate::nn::conv3d::{conv3d_backward, conv3d_forward, Conv3dParams};
use crate::nn::linear::{linear_backward, linear_forward};
use crate::nn::pool::{pool3d_backward, pool3d_forward, PoolKind};
use crate::nn::prelu::{prelu_backward, prelu_forward};
use crate::nn::residual::{Activation, Block, BlockSpec, Genre};
use crate::nn::{Params, Tape};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    Loss,
    Layer(String),
    Model,
}

impl Scope {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "loss" {
            return Ok(Scope::Loss);
        }
        if s == "model" {
            return Ok(Scope::Model);
        }
        if let Some(layer) = s.strip_prefix("layer:") {
            let known = ["conv3d", "prelu", "batchnorm", "pool", "linear", "residual"];
            if known.contains(&layer) {
                return Ok(Scope::Layer(layer.to_string()));
            }
            return Err(Error::Usage(format!(
                "unknown layer '{layer}' (expected one of {})",
                known.join(", ")
            )));
        }
        Err(Error::Usage(format!(
            "unknown gradcheck scope '{s}' (expected loss, layer:<name> or model)"
        )))
    }
}

#[derive(Debug, Clone)]
pub struct GroupResult {
    pub group: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GroupResult {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

#[derive(Debug, Clone, Default)]
pub struct GradcheckReport {
    pub groups: Vec<GroupResult>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(GroupResult::passed)
    }

    pub fn max_err(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_err).fold(0.0, f64::max)
    }

    pub fn lines(&self) -> Vec<String> {
        self.groups
            .iter()
            .map(|g| {
                format!(
                    "{} {:<28} max rel err {:>10.3e}  (tol {:.0e})",
                    if g.passed() { "PASS" } else { "FAIL" },
                    g.group,
                    g.max_rel_err,
                    g.tolerance
                )
            })
            .collect()
    }

    fn push<F: Scalar>(
        &mut self,
        group: impl Into<String>,
        f: &mut dyn FnMut(&Tensor<F>) -> Result<f64>,
        x: &Tensor<F>,
        analytic: &Tensor<F>,
        tolerance: f64,
        rng: &mut Rng,
    ) -> Result<()> {
        let report = probe_gradient(f, x, analytic, 48, rng)?;
        self.groups.push(GroupResult {
            group: group.into(),
            max_rel_err: report.max_rel_err,
            tolerance,
        });
        Ok(())
    }
}

fn layer_tol<F: Scalar>() -> f64 {
    if F::is_f32() {
        1e-3
    } else {
        1e-5
    }
}

fn loss_tol<F: Scalar>() -> f64 {
    if F::is_f32() {
        1e-3
    } else {
        1e-4
    }
}

fn model_tol<F: Scalar>() -> f64 {
    if F::is_f32() {
        1e-2
    } else {
        1e-4
    }
}

/// Loss-head suite: every margin, target angles planted in every ψ segment,
/// with and without annealing.
fn loss_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let d = 8;
    let tol = loss_tol::<F>();
    let mut rng_p = Rng::stream(&[seed, 1]);
    for m in 1..=4u32 {
        for seg in 0..m {
            let theta = (seg as f64 + 0.5) * std::f64::consts::PI / m as f64;
            let mut rng = Rng::stream(&[seed, m as u64, seg as u64]);
            let mut wrows: Tensor<F> = rng.normal(&[4, d], F::zero(), F::one())?;
            // class-0 weight along e0 so the engineered angle is exact
            for i in 0..d {
                wrows.data_mut()[i] = if i == 0 { F::one() } else { F::zero() };
            }
            let mut x: Tensor<F> = rng.normal(&[5, d], F::zero(), F::one())?;
            let radius = 1.6;
            x.data_mut()[0] = F::of_f64(radius * theta.cos());
            x.data_mut()[1] = F::of_f64(radius * theta.sin());
            for i in 2..d {
                x.data_mut()[i] = F::zero();
            }
            let labels = vec![0usize, 1, 2, 3, 1];
            let batch = FeatureBatch::new(x.clone(), labels.clone())?;
            let w = ClassifierWeights::new(wrows.clone())?;
            let lambda = if seg % 2 == 0 { 0.0 } else { 11.0 };
            let cfg = AngularLossConfig::new(m)?.with_lambda(F::of_f64(lambda));

            let fwd = asoftmax_forward(&batch, &w, &cfg)?;
            let (gx, gw) = asoftmax_backward(&batch, &w, &cfg, &fwd)?;

            report.push(
                format!("loss.m{m}.seg{seg}.grad_x"),
                &mut |t: &Tensor<F>| {
                    let b = FeatureBatch::new(t.clone(), labels.clone())?;
                    Ok(asoftmax_loss(&b, &w, &cfg)?.0.as_f64())
                },
                &x,
                &gx,
                tol,
                &mut rng_p,
            )?;
            report.push(
                format!("loss.m{m}.seg{seg}.grad_w"),
                &mut |t: &Tensor<F>| {
                    let ww = ClassifierWeights::new(t.clone())?;
                    Ok(asoftmax_loss(&batch, &ww, &cfg)?.0.as_f64())
                },
                &wrows,
                &gw,
                tol,
                &mut rng_p,
            )?;
        }
    }
    Ok(())
}

fn conv_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let tol = layer_tol::<F>();
    let mut rng = Rng::stream(&[seed, 2]);
    let x: Tensor<F> = rng.normal(&[2, 2, 4, 5, 5], F::zero(), F::one())?;
    let w: Tensor<F> = rng.normal(&[3, 2, 2, 3, 3], F::zero(), F::of_f64(0.5))?;
    let b: Tensor<F> = rng.normal(&[3], F::zero(), F::of_f64(0.5))?;
    let params = |ww: &Tensor<F>, bb: &Tensor<F>| {
        Conv3dParams::new(ww.clone(), Some(bb.clone()), [1, 2, 2], [1, 1, 1])
    };
    let p = params(&w, &b)?;
    let y = conv3d_forward(&x, &p)?;
    let v: Tensor<F> = rng.normal(y.dims(), F::zero(), F::one())?;
    let grads = conv3d_backward(&x, &p, &v)?;
    let loss = |xx: &Tensor<F>, ww: &Tensor<F>, bb: &Tensor<F>| -> Result<f64> {
        let y = conv3d_forward(xx, &params(ww, bb)?)?;
        Ok(y.data()
            .iter()
            .zip(v.data())
            .map(|(a, c)| a.as_f64() * c.as_f64())
            .sum())
    };
    let mut rng_p = Rng::stream(&[seed, 3]);
    report.push(
        "conv3d.grad_x",
        &mut |t| loss(t, &w, &b),
        &x,
        &grads.grad_x,
        tol,
        &mut rng_p,
    )?;
    report.push(
        "conv3d.grad_w",
        &mut |t| loss(&x, t, &b),
        &w,
        &grads.grad_w,
        tol,
        &mut rng_p,
    )?;
    report.push(
        "conv3d.grad_b",
        &mut |t| loss(&x, &w, t),
        &b,
        grads.grad_b.as_ref().expect("bias grads"),
        tol,
        &mut rng_p,
    )?;
    Ok(())
}

fn prelu_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let tol = layer_tol::<F>();
    let mut rng = Rng::stream(&[seed, 4]);
    let x: Tensor<F> = rng.normal(&[2, 3, 12], F::zero(), F::one())?;
    let a = Tensor::new(
        vec![3],
        vec![F::of_f64(0.25), F::of_f64(0.1), F::of_f64(0.7)],
    )?;
    let v: Tensor<F> = rng.normal(x.dims(), F::zero(), F::one())?;
    let (gx, ga) = prelu_backward(&x, &a, &v)?;
    let loss = |xx: &Tensor<F>, aa: &Tensor<F>| -> Result<f64> {
        let y = prelu_forward(xx, aa)?;
        Ok(y.data()
            .iter()
            .zip(v.data())
            .map(|(p, c)| p.as_f64() * c.as_f64())
            .sum())
    };
    let mut rng_p = Rng::stream(&[seed, 5]);
    report.push("prelu.grad_x", &mut |t| loss(t, &a), &x, &gx, tol, &mut rng_p)?;
    report.push("prelu.grad_slope", &mut |t| loss(&x, t), &a, &ga, tol, &mut rng_p)?;
    Ok(())
}

fn batchnorm_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let tol = layer_tol::<F>();
    let mut rng = Rng::stream(&[seed, 6]);
    let x: Tensor<F> = rng.normal(&[3, 2, 2, 3, 3], F::zero(), F::one())?;
    let gamma: Tensor<F> = rng.normal(&[2], F::one(), F::of_f64(0.2))?;
    let beta: Tensor<F> = rng.normal(&[2], F::zero(), F::of_f64(0.2))?;
    let eps = F::of_f64(1e-5);
    let v: Tensor<F> = rng.normal(x.dims(), F::zero(), F::one())?;
    let run = |xx: &Tensor<F>, gg: &Tensor<F>, bb: &Tensor<F>| -> Result<_> {
        let mut p = BatchNorm3dParams::new(2, F::of_f64(0.1), eps)?;
        p.gamma = gg.clone();
        p.beta = bb.clone();
        batchnorm3d_forward(xx, &mut p)
    };
    let (_, stats) = run(&x, &gamma, &beta)?;
    let (gx, ggamma, gbeta) = batchnorm3d_backward(&x, &gamma, eps, &stats, &v)?;
    let loss = |xx: &Tensor<F>, gg: &Tensor<F>, bb: &Tensor<F>| -> Result<f64> {
        let (y, _) = run(xx, gg, bb)?;
        Ok(y.data()
            .iter()
            .zip(v.data())
            .map(|(a, c)| a.as_f64() * c.as_f64())
            .sum())
    };
    let mut rng_p = Rng::stream(&[seed, 7]);
    report.push(
        "batchnorm.grad_x",
        &mut |t| loss(t, &gamma, &beta),
        &x,
        &gx,
        tol,
        &mut rng_p,
    )?;
    report.push(
        "batchnorm.grad_gamma",
        &mut |t| loss(&x, t, &beta),
        &gamma,
        &ggamma,
        tol,
        &mut rng_p,
    )?;
    report.push(
        "batchnorm.grad_beta",
        &mut |t| loss(&x, &gamma, t),
        &beta,
        &gbeta,
        tol,
        &mut rng_p,
    )?;
    Ok(())
}

fn pool_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let tol = layer_tol::<F>();
    let mut rng = Rng::stream(&[seed, 8]);
    let x: Tensor<F> = rng.normal(&[2, 2, 4, 4, 4], F::zero(), F::one())?;
    for (kind, name) in [(PoolKind::Max, "max"), (PoolKind::Avg, "avg")] {
        let fwd = pool3d_forward(&x, kind, [2, 2, 2], [2, 2, 2], [0, 0, 0])?;
        let v: Tensor<F> = rng.normal(fwd.out.dims(), F::zero(), F::one())?;
        let gx = pool3d_backward(
            &x,
            kind,
            [2, 2, 2],
            [2, 2, 2],
            [0, 0, 0],
            fwd.argmax.as_deref(),
            &v,
        )?;
        let mut rng_p = Rng::stream(&[seed, 9]);
        report.push(
            format!("pool.{name}.grad_x"),
            &mut |t: &Tensor<F>| {
                let y = pool3d_forward(t, kind, [2, 2, 2], [2, 2, 2], [0, 0, 0])?;
                Ok(y.out
                    .data()
                    .iter()
                    .zip(v.data())
                    .map(|(a, c)| a.as_f64() * c.as_f64())
                    .sum())
            },
            &x,
            &gx,
            tol,
            &mut rng_p,
        )?;
    }
    Ok(())
}

fn linear_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let tol = layer_tol::<F>();
    let mut rng = Rng::stream(&[seed, 10]);
    let x: Tensor<F> = rng.normal(&[4, 6], F::zero(), F::one())?;
    let w: Tensor<F> = rng.normal(&[3, 6], F::zero(), F::one())?;
    let b: Tensor<F> = rng.normal(&[3], F::zero(), F::one())?;
    let v: Tensor<F> = rng.normal(&[4, 3], F::zero(), F::one())?;
    let (gx, gw, gb) = linear_backward(&x, &w, &v)?;
    let loss = |xx: &Tensor<F>, ww: &Tensor<F>, bb: &Tensor<F>| -> Result<f64> {
        let y = linear_forward(xx, ww, Some(bb))?;
        Ok(y.data()
            .iter()
            .zip(v.data())
            .map(|(a, c)| a.as_f64() * c.as_f64())
            .sum())
    };
    let mut rng_p = Rng::stream(&[seed, 11]);
    report.push("linear.grad_x", &mut |t| loss(t, &w, &b), &x, &gx, tol, &mut rng_p)?;
    report.push("linear.grad_w", &mut |t| loss(&x, t, &b), &w, &gw, tol, &mut rng_p)?;
    report.push("linear.grad_b", &mut |t| loss(&x, &w, t), &b, &gb, tol, &mut rng_p)?;
    Ok(())
}

fn residual_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let tol = layer_tol::<F>();
    for genre in [
        Genre::Basic,
        Genre::Bottleneck,
        Genre::Preact,
        Genre::DenseTransition,
    ] {
        let mut store: Params<F> = Params::new();
        let mut rng = Rng::stream(&[seed, 12]);
        let block = Block::build(
            BlockSpec {
                genre,
                in_channels: 2,
                out_channels: 4,
                stride: [2, 2, 2],
                activation: Activation::Prelu,
            },
            &mut store,
            &mut rng,
            "b",
        )?;
        // Bias every normalization away from the activation kinks so the
        // composite is smooth on the probe scale; the kink-side derivatives
        // are covered by the dedicated prelu and pool suites.
        for id in store.ids().collect::<Vec<_>>() {
            if store.name(id).ends_with(".gamma") {
                store.value_mut(id).fill(F::of_f64(0.3));
            } else if store.name(id).ends_with(".beta") {
                store.value_mut(id).fill(F::of_f64(2.0));
            }
        }
        let x: Tensor<F> = rng.normal(&[2, 2, 3, 6, 6], F::of_f64(2.0), F::of_f64(0.5))?;
        let mut tape = Tape::new();
        let xid = tape.input(x.clone());
        let frozen = store.clone();
        let y = block.forward_train(&mut tape, &mut store, xid)?;
        let v: Tensor<F> =
            Rng::stream(&[seed, 13]).normal(tape.value(y).dims(), F::zero(), F::one())?;
        let grads = tape.backward(&mut store, y, v.clone())?;
        let mut rng_p = Rng::stream(&[seed, 14]);

        let loss_with_store = |store2: &mut Params<F>, xx: &Tensor<F>| -> Result<f64> {
            let mut tape2 = Tape::new();
            let xid2 = tape2.input(xx.clone());
            let y2 = block.forward_train(&mut tape2, store2, xid2)?;
            Ok(tape2
                .value(y2)
                .data()
                .iter()
                .zip(v.data())
                .map(|(a, c)| a.as_f64() * c.as_f64())
                .sum())
        };

        // Depth compounds rounding: a composite's single-precision forward
        // carries ~1e-3 of noise into any finite difference, so the 32-bit
        // pass checks absolutely at that scale (still decisive for wiring
        // errors, which show up at the gradient's own magnitude). The
        // double-precision pass keeps the tight relative floor.
        let mut settings = crate::check::FdSettings::for_scalar::<F>();
        if F::is_f32() {
            settings.denom_floor = 2.0;
        }
        let mut check = |group: String,
                         f: &mut dyn FnMut(&Tensor<F>) -> Result<f64>,
                         at: &Tensor<F>,
                         analytic: &Tensor<F>,
                         rng_p: &mut Rng|
         -> Result<()> {
            let probe =
                crate::check::probe_gradient_with(f, at, analytic, 48, rng_p, settings)?;
            report.groups.push(GroupResult {
                group,
                max_rel_err: probe.max_rel_err,
                tolerance: tol,
            });
            Ok(())
        };

        // whole-block gradient wrt the first convolution's weights
        let wid = store
            .find("b.conv1.w")
            .or_else(|| store.find("b.grow.w"))
            .expect("first conv weight");
        let wval = frozen.value(wid).clone();
        check(
            format!("residual.{}.grad_w1", genre.name()),
            &mut |t: &Tensor<F>| {
                let mut store2 = frozen.clone();
                *store2.value_mut(wid) = t.clone();
                loss_with_store(&mut store2, &x)
            },
            &wval,
            store.grad(wid),
            &mut rng_p,
        )?;

        let gx = grads[0].clone().expect("input grad");
        check(
            format!("residual.{}.grad_x", genre.name()),
            &mut |t: &Tensor<F>| {
                let mut store2 = frozen.clone();
                loss_with_store(&mut store2, t)
            },
            &x,
            &gx,
            &mut rng_p,
        )?;
    }
    Ok(())
}

fn model_suite<F: Scalar>(seed: u64, report: &mut GradcheckReport) -> Result<()> {
    let tol = model_tol::<F>();
    let mut cfg = preset("desk-resnet10-basic", 3)?;
    cfg.input = ClipDims { t: 8, hw: 32 };
    cfg.head = HeadKind::Angular;
    let mut model: Model<F> = build_model(&cfg, seed)?;
    let mut rng = Rng::stream(&[seed, 15]);
    let clips: Tensor<F> = rng.normal(&[2, 3, 8, 32, 32], F::zero(), F::one())?;
    let labels = vec![0usize, 2];
    let lcfg = AngularLossConfig::new(4)?;

    let frozen = model.store.clone();
    let (tape, emb_node) = model.forward_train(clips.clone())?;
    let batch = FeatureBatch::new(tape.value(emb_node).clone(), labels.clone())?;
    let w = ClassifierWeights::new(model.store.value(model.head_weight()).clone())?;
    let fwd = asoftmax_forward(&batch, &w, &lcfg)?;
    let (gx, _) = asoftmax_backward(&batch, &w, &lcfg, &fwd)?;
    let grads = tape.backward(&mut model.store, emb_node, gx)?;
    let input_grad = grads[0].clone().expect("input grad");

    let mut f = |t: &Tensor<F>| -> Result<f64> {
        let mut m2: Model<F> = build_model(&cfg, seed)?;
        m2.store = frozen.clone();
        let (tape2, emb2) = m2.forward_train(t.clone())?;
        let b2 = FeatureBatch::new(tape2.value(emb2).clone(), labels.clone())?;
        let w2 = ClassifierWeights::new(m2.store.value(m2.head_weight()).clone())?;
        Ok(asoftmax_forward(&b2, &w2, &lcfg)?.loss.as_f64())
    };
    let mut rng_p = Rng::stream(&[seed, 16]);
    // the deep composition carries the same 32-bit noise floor as the
    // residual suite
    let mut settings = crate::check::FdSettings::for_scalar::<F>();
    if F::is_f32() {
        settings.denom_floor = 2.0;
    }
    let probe =
        crate::check::probe_gradient_with(&mut f, &clips, &input_grad, 16, &mut rng_p, settings)?;
    report.groups.push(GroupResult {
        group: "model.input_grad".into(),
        max_rel_err: probe.max_rel_err,
        tolerance: tol,
    });
    Ok(())
}

/// Run the suites for a scope at any precision. The report carries
/// per-group maxima; the caller decides what a failure means.
pub fn run_gradcheck_as<F: Scalar>(scope: &Scope, seed: u64) -> Result<GradcheckReport> {
    let mut report = GradcheckReport::default();
    match scope {
        Scope::Loss => loss_suite::<F>(seed, &mut report)?,
        Scope::Layer(name) => match name.as_str() {
            "conv3d" => conv_suite::<F>(seed, &mut report)?,
            "prelu" => prelu_suite::<F>(seed, &mut report)?,
            "batchnorm" => batchnorm_suite::<F>(seed, &mut report)?,
            "pool" => pool_suite::<F>(seed, &mut report)?,
            "linear" => linear_suite::<F>(seed, &mut report)?,
            "residual" => residual_suite::<F>(seed, &mut report)?,
            other => return Err(Error::Usage(format!("unknown layer '{other}'"))),
        },
        Scope::Model => model_suite::<F>(seed, &mut report)?,
    }
    Ok(report)
}

/// Double-precision verification mode (the CLI entry point).
pub fn run_gradcheck(scope: &Scope, seed: u64) -> Result<GradcheckReport> {
    run_gradcheck_as::<f64>(scope, seed)
}
