//! Checkpoints: a directory of STEN parameter blobs plus a text manifest.
//!
//! ```text
//! checkpoint/
//!   manifest.txt     key = value lines, parameter list, optimizer kind
//!   config.txt       canonical training configuration
//!   params/<name>.sten
//!   opt/<name>.m.sten / .u.sten   (adamax)  or  .v.sten (sgd)
//! ```
//!
//! Parameters are stored in 32-bit STEN payloads, which round-trip
//! bit-exactly, so reloading restores training state precisely.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{read_tensor, write_tensor};
use crate::model::{build_model, Model};
use crate::tensor::Tensor;
use crate::Tensor32;

use super::config::{OptimizerKind, TrainConfig};
use super::train::model_config;

#[derive(Debug, Clone)]
pub enum OptimizerBuffers {
    Adamax {
        t: u64,
        m: Vec<(String, Tensor32)>,
        u: Vec<(String, Tensor32)>,
    },
    Sgd {
        v: Vec<(String, Tensor32)>,
    },
}

#[derive(Debug)]
pub struct Checkpoint {
    pub cfg: TrainConfig,
    pub config_hash: u64,
    /// Completed epochs (1-based count).
    pub epoch: usize,
    /// Optimizer steps taken; also the annealing iteration counter.
    pub steps: u64,
    pub channel_means: [f32; 3],
    pub classes: Vec<String>,
    pub val_loss_history: Vec<f64>,
    pub params: Vec<(String, Tensor32)>,
    pub opt: OptimizerBuffers,
}

/// Parameter names become file names; they contain only `[A-Za-z0-9._-]`.
fn param_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.sten"))
}

#[allow(clippy::too_many_arguments)]
pub fn save_checkpoint(
    dir: &Path,
    model: &Model<f32>,
    opt: &OptimizerBuffers,
    cfg: &TrainConfig,
    epoch: usize,
    steps: u64,
    channel_means: [f32; 3],
    classes: &[String],
    val_loss_history: &[f64],
) -> Result<()> {
    let params_dir = dir.join("params");
    let opt_dir = dir.join("opt");
    std::fs::create_dir_all(&params_dir).map_err(|e| Error::io(&params_dir, e))?;
    std::fs::create_dir_all(&opt_dir).map_err(|e| Error::io(&opt_dir, e))?;

    let config_path = dir.join("config.txt");
    std::fs::write(&config_path, cfg.canonical_text())
        .map_err(|e| Error::io(&config_path, e))?;

    let mut manifest = String::new();
    manifest.push_str("version = 1\n");
    manifest.push_str(&format!("config_hash = {:016x}\n", cfg.semantic_hash()));
    manifest.push_str(&format!("epoch = {epoch}\n"));
    manifest.push_str(&format!("steps = {steps}\n"));
    manifest.push_str(&format!("mean_r = {:?}\n", channel_means[0]));
    manifest.push_str(&format!("mean_g = {:?}\n", channel_means[1]));
    manifest.push_str(&format!("mean_b = {:?}\n", channel_means[2]));
    manifest.push_str(&format!("classes = {}\n", classes.join(",")));
    manifest.push_str(&format!(
        "val_loss_history = {}\n",
        val_loss_history
            .iter()
            .map(|v| format!("{v:?}"))
            .collect::<Vec<_>>()
            .join(",")
    ));
    match opt {
        OptimizerBuffers::Adamax { t, .. } => {
            manifest.push_str("optimizer = adamax\n");
            manifest.push_str(&format!("opt_t = {t}\n"));
        }
        OptimizerBuffers::Sgd { .. } => manifest.push_str("optimizer = sgd\n"),
    }

    for id in model.store.ids() {
        let name = model.store.name(id).to_string();
        manifest.push_str(&format!("param = {name}\n"));
        write_tensor(&param_path(&params_dir, &name), model.store.value(id))?;
    }
    match opt {
        OptimizerBuffers::Adamax { m, u, .. } => {
            for (name, tensor) in m {
                write_tensor(&opt_dir.join(format!("{name}.m.sten")), tensor)?;
            }
            for (name, tensor) in u {
                write_tensor(&opt_dir.join(format!("{name}.u.sten")), tensor)?;
            }
        }
        OptimizerBuffers::Sgd { v } => {
            for (name, tensor) in v {
                write_tensor(&opt_dir.join(format!("{name}.v.sten")), tensor)?;
            }
        }
    }

    let manifest_path = dir.join("manifest.txt");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let config_path = dir.join("config.txt");
    let cfg_text =
        std::fs::read_to_string(&config_path).map_err(|e| Error::io(&config_path, e))?;
    let cfg = TrainConfig::parse_str(&cfg_text)?;

    let manifest_path = dir.join("manifest.txt");
    let manifest =
        std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;

    let mut epoch = None;
    let mut steps = None;
    let mut means = [None; 3];
    let mut classes: Vec<String> = Vec::new();
    let mut val_loss_history: Vec<f64> = Vec::new();
    let mut stored_hash = None;
    let mut optimizer = None;
    let mut opt_t: u64 = 0;
    let mut param_names: Vec<String> = Vec::new();

    let bad = |detail: String| Error::format(&manifest_path, detail);
    for line in manifest.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        match key {
            "version" => {
                if value != "1" {
                    return Err(bad(format!("unsupported checkpoint version {value}")));
                }
            }
            "config_hash" => {
                stored_hash =
                    Some(u64::from_str_radix(value, 16).map_err(|_| bad("bad hash".into()))?)
            }
            "epoch" => epoch = Some(value.parse().map_err(|_| bad("bad epoch".into()))?),
            "steps" => steps = Some(value.parse().map_err(|_| bad("bad steps".into()))?),
            "mean_r" => means[0] = Some(value.parse().map_err(|_| bad("bad mean".into()))?),
            "mean_g" => means[1] = Some(value.parse().map_err(|_| bad("bad mean".into()))?),
            "mean_b" => means[2] = Some(value.parse().map_err(|_| bad("bad mean".into()))?),
            "classes" => classes = value.split(',').map(str::to_string).collect(),
            "val_loss_history" => {
                if !value.is_empty() {
                    val_loss_history = value
                        .split(',')
                        .map(|v| v.parse().map_err(|_| bad("bad val_loss_history".into())))
                        .collect::<Result<Vec<f64>>>()?;
                }
            }
            "optimizer" => optimizer = Some(OptimizerKind::parse(value)?),
            "opt_t" => opt_t = value.parse().map_err(|_| bad("bad opt_t".into()))?,
            "param" => param_names.push(value.to_string()),
            _ => return Err(bad(format!("unknown manifest key '{key}'"))),
        }
    }

    let stored_hash = stored_hash.ok_or_else(|| bad("missing config_hash".into()))?;
    if stored_hash != cfg.semantic_hash() {
        return Err(Error::Incompatible(format!(
            "stored config hash {stored_hash:016x} does not match config.txt ({:016x})",
            cfg.semantic_hash()
        )));
    }
    let epoch = epoch.ok_or_else(|| bad("missing epoch".into()))?;
    let steps = steps.ok_or_else(|| bad("missing steps".into()))?;
    let channel_means = [
        means[0].ok_or_else(|| bad("missing mean_r".into()))?,
        means[1].ok_or_else(|| bad("missing mean_g".into()))?,
        means[2].ok_or_else(|| bad("missing mean_b".into()))?,
    ];
    if classes.is_empty() {
        return Err(bad("missing classes".into()));
    }
    let optimizer = optimizer.ok_or_else(|| bad("missing optimizer".into()))?;

    let params_dir = dir.join("params");
    let mut params = Vec::with_capacity(param_names.len());
    for name in &param_names {
        params.push((name.clone(), read_tensor(&param_path(&params_dir, name))?));
    }

    let opt_dir = dir.join("opt");
    let trainable: Vec<String> = param_names
        .iter()
        .filter(|n| !n.ends_with(".running_mean") && !n.ends_with(".running_var"))
        .cloned()
        .collect();
    let opt = match optimizer {
        OptimizerKind::Adamax => {
            let mut m = Vec::new();
            let mut u = Vec::new();
            for name in &trainable {
                m.push((
                    name.clone(),
                    read_tensor(&opt_dir.join(format!("{name}.m.sten")))?,
                ));
                u.push((
                    name.clone(),
                    read_tensor(&opt_dir.join(format!("{name}.u.sten")))?,
                ));
            }
            OptimizerBuffers::Adamax { t: opt_t, m, u }
        }
        OptimizerKind::Sgd => {
            let mut v = Vec::new();
            for name in &trainable {
                v.push((
                    name.clone(),
                    read_tensor(&opt_dir.join(format!("{name}.v.sten")))?,
                ));
            }
            OptimizerBuffers::Sgd { v }
        }
    };

    Ok(Checkpoint {
        cfg,
        config_hash: stored_hash,
        epoch,
        steps,
        channel_means,
        classes,
        val_loss_history,
        params,
        opt,
    })
}

/// Rebuild the model from the stored configuration and overwrite every
/// parameter with the checkpointed value.
pub fn restore(ckpt: &Checkpoint) -> Result<Model<f32>> {
    let mc = model_config(&ckpt.cfg, ckpt.classes.len())?;
    let mut model: Model<f32> = build_model(&mc, ckpt.cfg.seed)?;
    let mut covered: HashSet<String> = HashSet::new();
    for (name, tensor) in &ckpt.params {
        let id = model.store.find(name).ok_or_else(|| {
            Error::Incompatible(format!("checkpoint parameter '{name}' not in model"))
        })?;
        if model.store.value(id).dims() != tensor.dims() {
            return Err(Error::Incompatible(format!(
                "parameter '{name}' dims {:?} do not match model dims {:?}",
                tensor.dims(),
                model.store.value(id).dims()
            )));
        }
        *model.store.value_mut(id) = tensor.clone();
        covered.insert(name.clone());
    }
    for id in model.store.ids() {
        if !covered.contains(model.store.name(id)) {
            return Err(Error::Incompatible(format!(
                "model parameter '{}' missing from checkpoint",
                model.store.name(id)
            )));
        }
    }
    Ok(model)
}

/// Bit-exact tensor equality (used by round-trip tests).
pub fn tensors_equal(a: &Tensor<f32>, b: &Tensor<f32>) -> bool {
    a.dims() == b.dims()
        && a.data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
}
