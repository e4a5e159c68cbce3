//! Training and evaluation loops.
//!
//! Every random draw comes from a stream derived from `(seed, purpose,
//! epoch, clip)`, so runs reproduce byte-for-byte and resumed runs continue
//! exactly where the checkpoint left off. Validation uses one deterministic
//! center clip per video unless multi-clip voting is configured.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::loss::{
    angle_stats, asoftmax_backward, asoftmax_forward, cross_entropy_backward, cross_entropy_loss,
    AngleStats, AngularLossConfig, ClassifierWeights, FeatureBatch,
};
use crate::model::{build_model, preset, HeadKind, Model, ModelConfig};
use crate::nn::linear::{linear_backward, linear_forward};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::video::{
    augment_clip, split_dataset, split_dataset_counts, split_dataset_stratified, AugmentMode,
    AugmentPolicy, DatasetSplit,
};
use crate::Tensor32;

use super::checkpoint::{save_checkpoint, Checkpoint, OptimizerBuffers};
use super::config::{OptimizerKind, TrainConfig};
use super::dataset::{channel_means, load_dataset, Dataset};
use crate::optim::{AdamaxState, SgdState};

const SHUFFLE_SALT: u64 = 0x53485546;
const AUGMENT_SALT: u64 = 0x41554747;
const EVAL_CLIP_SALT: u64 = 0x45564350;

pub const METRICS_HEADER: &str =
    "epoch,train_loss,val_loss,val_loss_avg,val_acc,intra_mean,inter_min,wall_time_s";

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_loss_avg: f64,
    pub val_acc: f64,
    pub intra_mean: f64,
    pub inter_min: f64,
    pub wall_time_s: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.epoch,
            self.train_loss,
            self.val_loss,
            self.val_loss_avg,
            self.val_acc,
            self.intra_mean,
            self.inter_min,
            self.wall_time_s
        )
    }
}

/// Trailing mean with window `w`: element `i` averages the last
/// `min(w, i+1)` raw values. Recomputable from the raw column alone.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..values.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            let slice = &values[lo..=i];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect()
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Rows produced by this invocation (resumed runs return only new rows).
    pub rows: Vec<MetricsRow>,
    pub metrics_path: PathBuf,
    pub checkpoint_dir: PathBuf,
    pub final_val_acc: f64,
    pub final_stats: AngleStats<f32>,
}

pub(super) fn model_config(cfg: &TrainConfig, num_classes: usize) -> Result<ModelConfig> {
    let mut mc = preset(&cfg.preset, num_classes)?;
    mc.head = cfg.loss;
    if let Some(act) = cfg.activation {
        mc.activation = act;
    }
    Ok(mc)
}

enum Optimizer {
    Adamax(AdamaxState<f32>),
    Sgd(SgdState<f32>),
}

impl Optimizer {
    fn fresh(cfg: &TrainConfig, store: &crate::nn::Params<f32>) -> Result<Self> {
        Ok(match cfg.optimizer {
            OptimizerKind::Adamax => Optimizer::Adamax(AdamaxState::new(
                store,
                cfg.lr as f32,
                cfg.weight_decay as f32,
            )?),
            OptimizerKind::Sgd => {
                Optimizer::Sgd(SgdState::new(store, cfg.lr as f32, cfg.momentum as f32)?)
            }
        })
    }

    fn restore(
        cfg: &TrainConfig,
        store: &crate::nn::Params<f32>,
        bufs: &OptimizerBuffers,
    ) -> Result<Self> {
        let mut opt = Self::fresh(cfg, store)?;
        match (&mut opt, bufs) {
            (Optimizer::Adamax(st), OptimizerBuffers::Adamax { t, m, u }) => {
                st.t = *t;
                let ids: Vec<_> = st.ids().to_vec();
                let (ms, us) = st.buffers_mut();
                for (slot, id) in ids.iter().enumerate() {
                    let name = store.name(*id);
                    let find = |v: &[(String, Tensor32)]| -> Result<Tensor32> {
                        v.iter()
                            .find(|(n, _)| n == name)
                            .map(|(_, t)| t.clone())
                            .ok_or_else(|| {
                                Error::Incompatible(format!(
                                    "optimizer buffer for '{name}' missing from checkpoint"
                                ))
                            })
                    };
                    ms[slot] = find(m)?;
                    us[slot] = find(u)?;
                }
            }
            (Optimizer::Sgd(st), OptimizerBuffers::Sgd { v }) => {
                let ids: Vec<_> = st.ids().to_vec();
                let vs = st.buffers_mut();
                for (slot, id) in ids.iter().enumerate() {
                    let name = store.name(*id);
                    vs[slot] = v
                        .iter()
                        .find(|(n, _)| n == name)
                        .map(|(_, t)| t.clone())
                        .ok_or_else(|| {
                            Error::Incompatible(format!(
                                "optimizer buffer for '{name}' missing from checkpoint"
                            ))
                        })?;
                }
            }
            _ => {
                return Err(Error::Incompatible(
                    "checkpoint optimizer kind does not match configuration".into(),
                ))
            }
        }
        Ok(opt)
    }

    fn step(&mut self, store: &mut crate::nn::Params<f32>) -> Result<()> {
        match self {
            Optimizer::Adamax(st) => st.step(store),
            Optimizer::Sgd(st) => st.step(store),
        }
    }

    fn buffers(&self, store: &crate::nn::Params<f32>) -> OptimizerBuffers {
        match self {
            Optimizer::Adamax(st) => {
                let (m, u) = st.buffers();
                OptimizerBuffers::Adamax {
                    t: st.t,
                    m: st
                        .ids()
                        .iter()
                        .zip(m)
                        .map(|(&id, t)| (store.name(id).to_string(), t.clone()))
                        .collect(),
                    u: st
                        .ids()
                        .iter()
                        .zip(u)
                        .map(|(&id, t)| (store.name(id).to_string(), t.clone()))
                        .collect(),
                }
            }
            Optimizer::Sgd(st) => OptimizerBuffers::Sgd {
                v: st
                    .ids()
                    .iter()
                    .zip(st.buffers())
                    .map(|(&id, t)| (store.name(id).to_string(), t.clone()))
                    .collect(),
            },
        }
    }
}

fn split_for(cfg: &TrainConfig, ds: &Dataset) -> Result<DatasetSplit> {
    let ids: Vec<usize> = (0..ds.len()).collect();
    if let Some(tc) = cfg.train_count {
        if let Some(vc) = cfg.val_count {
            if tc + vc != ds.len() {
                return Err(Error::Config(format!(
                    "train_count {tc} + val_count {vc} != dataset size {}",
                    ds.len()
                )));
            }
        }
        split_dataset_counts(&ids, tc, cfg.seed)
    } else if cfg.stratified {
        split_dataset_stratified(&ids, &ds.labels(), cfg.split_ratio, cfg.seed)
    } else {
        split_dataset(&ids, cfg.split_ratio, cfg.seed)
    }
}

/// Stack augmented clips for the given video ids into a `[B, 3, 16, S, S]`
/// batch. Each clip draws from its own `(seed, epoch, id)` stream.
fn assemble_batch(
    ds: &Dataset,
    ids: &[usize],
    policy: &AugmentPolicy<f32>,
    seed: u64,
    epoch: u64,
    mode: AugmentMode,
) -> Result<Tensor32> {
    let first = augment_clip(
        &ds.videos[ids[0]],
        policy,
        &mut Rng::stream(&[seed, AUGMENT_SALT, epoch, ids[0] as u64]),
        mode,
    )?;
    let clip_dims = first.dims().to_vec();
    let mut dims = vec![ids.len()];
    dims.extend_from_slice(&clip_dims);
    let clip_len = first.len();
    let mut out = Tensor::zeros(&dims)?;
    out.data_mut()[..clip_len].copy_from_slice(first.data());
    for (slot, &id) in ids.iter().enumerate().skip(1) {
        let clip = augment_clip(
            &ds.videos[id],
            policy,
            &mut Rng::stream(&[seed, AUGMENT_SALT, epoch, id as u64]),
            mode,
        )?;
        out.data_mut()[slot * clip_len..(slot + 1) * clip_len].copy_from_slice(clip.data());
    }
    Ok(out)
}

struct EvalInternal {
    loss: f64,
    accuracy: f64,
    stats: AngleStats<f32>,
    embeddings: Tensor32,
    labels: Vec<usize>,
}

/// Pre-assembled deterministic eval clips: the center clip of every video,
/// chunked into batches. Built once, reused every epoch.
struct EvalSet {
    ids: Vec<usize>,
    labels: Vec<usize>,
    batches: Vec<Tensor32>,
}

fn build_eval_set(
    ds: &Dataset,
    ids: &[usize],
    policy: &AugmentPolicy<f32>,
    cfg: &TrainConfig,
) -> Result<EvalSet> {
    if ids.is_empty() {
        return Err(Error::Input("evaluation split is empty".into()));
    }
    let labels: Vec<usize> = ids.iter().map(|&id| ds.videos[id].label).collect();
    let mut batches = Vec::new();
    for chunk in ids.chunks(cfg.batch_size.max(1)) {
        batches.push(assemble_batch(ds, chunk, policy, cfg.seed, 0, AugmentMode::Eval)?);
    }
    Ok(EvalSet {
        ids: ids.to_vec(),
        labels,
        batches,
    })
}

/// Deterministic evaluation over a pre-assembled eval set.
fn eval_set(
    model: &Model<f32>,
    ds: &Dataset,
    set: &EvalSet,
    policy: &AugmentPolicy<f32>,
    cfg: &TrainConfig,
    steps: u64,
) -> Result<EvalInternal> {
    let ids = &set.ids;
    let labels = set.labels.clone();
    let d = model.cfg.embed_dim;
    let mut embeddings = Tensor::zeros(&[ids.len(), d])?;
    let mut logits_rows: Vec<Vec<f32>> = Vec::with_capacity(ids.len());

    let mut slot = 0usize;
    for clips in &set.batches {
        let (emb, logits) = model.forward_eval(clips)?;
        for row in 0..clips.dims()[0] {
            embeddings.data_mut()[slot * d..(slot + 1) * d]
                .copy_from_slice(&emb.data()[row * d..(row + 1) * d]);
            logits_rows.push(logits.row(row).to_vec());
            slot += 1;
        }
    }

    // predictions: center clip, plus optional extra sampled clips voted by
    // majority (lowest label wins ties)
    let mut predicted: Vec<usize> = logits_rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                .map(|(j, _)| j)
                .unwrap_or(0)
        })
        .collect();
    if cfg.eval_clips > 1 {
        let classes = model.cfg.num_classes;
        for (slot, &id) in ids.iter().enumerate() {
            let mut votes = vec![0usize; classes];
            votes[predicted[slot]] += 1;
            for k in 1..cfg.eval_clips {
                let clips = {
                    let mut rng =
                        Rng::stream(&[cfg.seed, EVAL_CLIP_SALT, id as u64, k as u64]);
                    let clip = augment_clip(&ds.videos[id], policy, &mut rng, AugmentMode::Train)?;
                    let mut dims = vec![1];
                    dims.extend_from_slice(clip.dims());
                    Tensor::new(dims, clip.into_data())?
                };
                let label = model.predict(&clips)?[0];
                votes[label] += 1;
            }
            predicted[slot] = votes
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
                .map(|(j, _)| j)
                .unwrap_or(0);
        }
    }

    let correct = predicted
        .iter()
        .zip(&labels)
        .filter(|(p, l)| p == l)
        .count();
    let accuracy = correct as f64 / ids.len() as f64;

    let batch = FeatureBatch::new(embeddings.clone(), labels.clone())?;
    let head_w = ClassifierWeights::new(model.store.value(model.head_weight()).clone())?;
    let loss = match model.head_kind() {
        HeadKind::Angular => {
            let lcfg = loss_config(cfg, steps);
            asoftmax_forward(&batch, &head_w, &lcfg)?.loss as f64
        }
        HeadKind::CrossEntropy => {
            let logits = linear_forward(
                &embeddings,
                model.store.value(model.head_weight()),
                model.head_bias().map(|b| model.store.value(b)),
            )?;
            cross_entropy_loss(&logits, &labels)?.loss as f64
        }
    };
    let stats = angle_stats(&batch, &head_w)?;
    Ok(EvalInternal {
        loss,
        accuracy,
        stats,
        embeddings,
        labels,
    })
}

fn loss_config(cfg: &TrainConfig, steps: u64) -> AngularLossConfig<f32> {
    let mut lcfg = AngularLossConfig::new(cfg.margin).expect("validated margin");
    lcfg.lambda_schedule = cfg.lambda;
    lcfg.anneal_lambda = cfg.lambda.value(steps) as f32;
    lcfg
}

pub fn train(cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    train_with_progress(cfg, out_dir, |_| {})
}

pub fn train_with_progress(
    cfg: &TrainConfig,
    out_dir: &Path,
    progress: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    train_inner(cfg.clone(), out_dir, None, progress)
}

/// Continue a checkpointed run to `epochs` total epochs (or the stored
/// horizon when `None`). Metrics for the new epochs go to `out_dir`.
pub fn train_resume(
    ckpt_dir: &Path,
    epochs: Option<usize>,
    out_dir: &Path,
) -> Result<TrainOutcome> {
    train_resume_with_progress(ckpt_dir, epochs, out_dir, |_| {})
}

pub fn train_resume_with_progress(
    ckpt_dir: &Path,
    epochs: Option<usize>,
    out_dir: &Path,
    progress: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    let ckpt = super::checkpoint::load_checkpoint(ckpt_dir)?;
    let mut cfg = ckpt.cfg.clone();
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    if cfg.epochs <= ckpt.epoch {
        return Err(Error::Config(format!(
            "checkpoint already covers epoch {}; nothing to train up to {}",
            ckpt.epoch, cfg.epochs
        )));
    }
    train_inner(cfg, out_dir, Some(ckpt), progress)
}

fn train_inner(
    cfg: TrainConfig,
    out_dir: &Path,
    resume: Option<Checkpoint>,
    mut progress: impl FnMut(&MetricsRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let ds = load_dataset(&cfg.data_root)?;
    if ds.classes.len() < 2 {
        return Err(Error::Input(format!(
            "training needs at least 2 classes, found {}",
            ds.classes.len()
        )));
    }
    let split = split_for(&cfg, &ds)?;
    if split.train.is_empty() || split.val.is_empty() {
        return Err(Error::Input("split produced an empty side".into()));
    }
    let means = channel_means(&ds, &split.train);
    let policy = AugmentPolicy {
        channel_means: means,
        ..AugmentPolicy::default()
    };

    let (mut model, mut opt, start_epoch, mut steps, mut raw_val_losses) = match &resume {
        None => {
            let mc = model_config(&cfg, ds.classes.len())?;
            let model: Model<f32> = build_model(&mc, cfg.seed)?;
            let opt = Optimizer::fresh(&cfg, &model.store)?;
            (model, opt, 1usize, 0u64, Vec::new())
        }
        Some(ckpt) => {
            if ckpt.cfg.semantic_hash() != cfg.semantic_hash() {
                return Err(Error::Incompatible(
                    "resume configuration differs from the checkpointed one".into(),
                ));
            }
            if ckpt.classes != ds.classes {
                return Err(Error::Incompatible(format!(
                    "dataset classes {:?} do not match checkpoint classes {:?}",
                    ds.classes, ckpt.classes
                )));
            }
            if ckpt.channel_means.iter().zip(&means).any(|(a, b)| a.to_bits() != b.to_bits()) {
                return Err(Error::Incompatible(
                    "dataset channel means changed since the checkpoint was written".into(),
                ));
            }
            let model = super::checkpoint::restore(ckpt)?;
            let opt = Optimizer::restore(&cfg, &model.store, &ckpt.opt)?;
            (
                model,
                opt,
                ckpt.epoch + 1,
                ckpt.steps,
                ckpt.val_loss_history.clone(),
            )
        }
    };

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_path = out_dir.join("metrics.csv");
    let mut metrics_file =
        std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(metrics_file, "{METRICS_HEADER}").map_err(|e| Error::io(&metrics_path, e))?;
    let ckpt_dir = out_dir.join("checkpoint");

    let started = Instant::now();
    let mut rows = Vec::new();
    let mut final_eval: Option<EvalInternal> = None;
    let val_set = build_eval_set(&ds, &split.val, &policy, &cfg)?;

    for epoch in start_epoch..=cfg.epochs {
        let epoch_u64 = epoch as u64;
        let mut order = split.train.clone();
        Rng::stream(&[cfg.seed, SHUFFLE_SALT, epoch_u64]).shuffle(&mut order);

        let mut loss_sum = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let clips = assemble_batch(&ds, chunk, &policy, cfg.seed, epoch_u64, AugmentMode::Train)?;
            let labels: Vec<usize> = chunk.iter().map(|&id| ds.videos[id].label).collect();
            let (tape, emb_node) = model.forward_train(clips)?;
            let emb = tape.value(emb_node).clone();

            let (loss, grad_emb) = match model.head_kind() {
                HeadKind::Angular => {
                    let lcfg = loss_config(&cfg, steps);
                    let batch = FeatureBatch::new(emb, labels)?;
                    let w = ClassifierWeights::new(
                        model.store.value(model.head_weight()).clone(),
                    )?;
                    let fwd = asoftmax_forward(&batch, &w, &lcfg)?;
                    let (gx, gw) = asoftmax_backward(&batch, &w, &lcfg, &fwd)?;
                    model.store.accumulate_grad(model.head_weight(), &gw)?;
                    (fwd.loss as f64, gx)
                }
                HeadKind::CrossEntropy => {
                    let w_id = model.head_weight();
                    let b_id = model.head_bias().expect("ce head has a bias");
                    let logits = linear_forward(
                        &emb,
                        model.store.value(w_id),
                        Some(model.store.value(b_id)),
                    )?;
                    let fwd = cross_entropy_loss(&logits, &labels)?;
                    let gl = cross_entropy_backward(&fwd, &labels)?;
                    let (g_emb, gw, gb) = linear_backward(&emb, model.store.value(w_id), &gl)?;
                    model.store.accumulate_grad(w_id, &gw)?;
                    model.store.accumulate_grad(b_id, &gb)?;
                    (fwd.loss as f64, g_emb)
                }
            };
            if !loss.is_finite() {
                // the checkpoint of the last completed epoch stays on disk
                return Err(Error::Numeric(format!(
                    "loss became {loss} at epoch {epoch}; aborting with last-good checkpoint in {}",
                    ckpt_dir.display()
                )));
            }
            tape.backward_params(&mut model.store, emb_node, grad_emb)?;
            opt.step(&mut model.store)?;
            model.store.zero_grads();
            steps += 1;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / split.train.len() as f64;

        let ev = eval_set(&model, &ds, &val_set, &policy, &cfg, steps)?;
        raw_val_losses.push(ev.loss);
        let avg = *trailing_mean(&raw_val_losses, cfg.metrics_window)
            .last()
            .expect("nonempty history");
        let row = MetricsRow {
            epoch,
            train_loss,
            val_loss: ev.loss,
            val_loss_avg: avg,
            val_acc: ev.accuracy,
            intra_mean: ev.stats.intra_mean as f64,
            inter_min: ev.stats.inter_min.map(|v| v as f64).unwrap_or(f64::NAN),
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        writeln!(metrics_file, "{}", row.to_csv()).map_err(|e| Error::io(&metrics_path, e))?;
        metrics_file.flush().map_err(|e| Error::io(&metrics_path, e))?;

        save_checkpoint(
            &ckpt_dir,
            &model,
            &opt.buffers(&model.store),
            &cfg,
            epoch,
            steps,
            means,
            &ds.classes,
            &raw_val_losses,
        )?;
        progress(&row);
        rows.push(row);
        final_eval = Some(ev);
    }

    let ev = final_eval.expect("at least one epoch ran");
    Ok(TrainOutcome {
        rows,
        metrics_path,
        checkpoint_dir: ckpt_dir,
        final_val_acc: ev.accuracy,
        final_stats: ev.stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSel {
    Train,
    Val,
    All,
}

impl SplitSel {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSel::Train),
            "val" => Ok(SplitSel::Val),
            "all" => Ok(SplitSel::All),
            other => Err(Error::Usage(format!(
                "unknown split '{other}' (expected train, val or all)"
            ))),
        }
    }
}

#[derive(Debug)]
pub struct EvalReport {
    pub accuracy: f64,
    pub loss: f64,
    pub stats: AngleStats<f32>,
    pub count: usize,
}

/// Evaluate a checkpoint on a dataset split. When a configuration is passed
/// explicitly its semantic hash must match the checkpoint.
pub fn evaluate(
    ckpt_dir: &Path,
    data_root: Option<&Path>,
    split_sel: SplitSel,
    cfg_override: Option<&TrainConfig>,
) -> Result<EvalReport> {
    let (_, report) = evaluate_with_embeddings(ckpt_dir, data_root, split_sel, cfg_override)?;
    Ok(report)
}

/// Evaluation that also returns the per-video embeddings and labels in
/// dataset order (the extract-embeddings path).
pub fn evaluate_with_embeddings(
    ckpt_dir: &Path,
    data_root: Option<&Path>,
    split_sel: SplitSel,
    cfg_override: Option<&TrainConfig>,
) -> Result<((Tensor32, Vec<usize>), EvalReport)> {
    let ckpt = super::checkpoint::load_checkpoint(ckpt_dir)?;
    if let Some(given) = cfg_override {
        if given.semantic_hash() != ckpt.cfg.semantic_hash() {
            return Err(Error::Incompatible(format!(
                "configuration hash {:016x} does not match checkpoint hash {:016x}",
                given.semantic_hash(),
                ckpt.cfg.semantic_hash()
            )));
        }
    }
    let mut cfg = ckpt.cfg.clone();
    if let Some(root) = data_root {
        cfg.data_root = root.to_path_buf();
    }
    let ds = load_dataset(&cfg.data_root)?;
    if ds.classes != ckpt.classes {
        return Err(Error::Incompatible(format!(
            "dataset classes {:?} do not match checkpoint classes {:?}",
            ds.classes, ckpt.classes
        )));
    }
    let split = split_for(&cfg, &ds)?;
    let ids: Vec<usize> = match split_sel {
        SplitSel::Train => split.train.clone(),
        SplitSel::Val => split.val.clone(),
        SplitSel::All => (0..ds.len()).collect(),
    };
    let model = super::checkpoint::restore(&ckpt)?;
    let policy = AugmentPolicy {
        channel_means: ckpt.channel_means,
        ..AugmentPolicy::default()
    };
    let set = build_eval_set(&ds, &ids, &policy, &cfg)?;
    let ev = eval_set(&model, &ds, &set, &policy, &cfg, ckpt.steps)?;
    Ok((
        (ev.embeddings, ev.labels),
        EvalReport {
            accuracy: ev.accuracy,
            loss: ev.loss,
            stats: ev.stats,
            count: ids.len(),
        },
    ))
}
