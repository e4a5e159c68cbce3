//! Experiment configuration: flat `key = value` files with `#` comments.
//! Unknown and duplicate keys are rejected outright.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::loss::LambdaSchedule;
use crate::model::HeadKind;
use crate::nn::Activation;
use crate::optim::{
    ADAMAX_DEFAULT_LR, SGD_DEFAULT_LR, SGD_DEFAULT_MOMENTUM,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adamax,
    Sgd,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "adamax" => Ok(OptimizerKind::Adamax),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Adamax => "adamax",
            OptimizerKind::Sgd => "sgd",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub preset: String,
    pub loss: HeadKind,
    pub margin: u32,
    pub lambda: LambdaSchedule,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Overrides the preset's activation when set.
    pub activation: Option<Activation>,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub data_root: PathBuf,
    pub split_ratio: f64,
    pub train_count: Option<usize>,
    pub val_count: Option<usize>,
    pub stratified: bool,
    pub metrics_window: usize,
    /// Clips voted per video at evaluation; 1 = single center clip.
    pub eval_clips: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preset: "desk-resnet10-basic".into(),
            loss: HeadKind::Angular,
            margin: 4,
            lambda: LambdaSchedule {
                initial: 1000.0,
                floor: 5.0,
                decay: 0.99,
            },
            optimizer: OptimizerKind::Adamax,
            lr: ADAMAX_DEFAULT_LR,
            momentum: SGD_DEFAULT_MOMENTUM,
            weight_decay: 0.0,
            activation: None,
            batch_size: 16,
            epochs: 30,
            seed: 0,
            data_root: PathBuf::new(),
            split_ratio: 0.6,
            train_count: None,
            val_count: None,
            stratified: false,
            metrics_window: 5,
            eval_clips: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.metrics_window == 0 || self.eval_clips == 0 {
            return Err(Error::Config(
                "metrics_window and eval_clips must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::Config(format!(
                "split_ratio {} outside [0, 1]",
                self.split_ratio
            )));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.weight_decay < 0.0 || self.momentum < 0.0 {
            return Err(Error::Config(
                "momentum and weight_decay must be non-negative".into(),
            ));
        }
        if !(1..=4).contains(&self.margin) {
            return Err(Error::Config(format!(
                "margin must be in 1..=4, got {}",
                self.margin
            )));
        }
        self.lambda.validate()?;
        Ok(())
    }

    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        let mut lambda_given = false;
        let mut seen: HashSet<String> = HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{key}'",
                    lineno + 1
                )));
            }
            let bad = |what: &str| {
                Error::Config(format!("line {}: invalid {what} '{value}'", lineno + 1))
            };
            match key {
                "preset" => cfg.preset = value.to_string(),
                "loss" => cfg.loss = HeadKind::parse(value)?,
                "margin" => cfg.margin = value.parse().map_err(|_| bad("margin"))?,
                "lambda_initial" => {
                    cfg.lambda.initial = value.parse().map_err(|_| bad("lambda_initial"))?;
                    lambda_given = true;
                }
                "lambda_floor" => {
                    cfg.lambda.floor = value.parse().map_err(|_| bad("lambda_floor"))?;
                    lambda_given = true;
                }
                "lambda_decay" => {
                    cfg.lambda.decay = value.parse().map_err(|_| bad("lambda_decay"))?;
                    lambda_given = true;
                }
                "optimizer" => cfg.optimizer = OptimizerKind::parse(value)?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
                "momentum" => cfg.momentum = value.parse().map_err(|_| bad("momentum"))?,
                "weight_decay" => {
                    cfg.weight_decay = value.parse().map_err(|_| bad("weight_decay"))?
                }
                "activation" => cfg.activation = Some(Activation::parse(value)?),
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("batch_size"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("epochs"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "data_root" => cfg.data_root = PathBuf::from(value),
                "split_ratio" => {
                    cfg.split_ratio = value.parse().map_err(|_| bad("split_ratio"))?
                }
                "train_count" => {
                    cfg.train_count = Some(value.parse().map_err(|_| bad("train_count"))?)
                }
                "val_count" => cfg.val_count = Some(value.parse().map_err(|_| bad("val_count"))?),
                "stratified" => cfg.stratified = value.parse().map_err(|_| bad("stratified"))?,
                "metrics_window" => {
                    cfg.metrics_window = value.parse().map_err(|_| bad("metrics_window"))?
                }
                "eval_clips" => cfg.eval_clips = value.parse().map_err(|_| bad("eval_clips"))?,
                other => {
                    return Err(Error::Config(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        // sgd keeps its own default learning rate unless one was given
        if cfg.optimizer == OptimizerKind::Sgd && !seen.contains("lr") {
            cfg.lr = SGD_DEFAULT_LR;
        }
        // the baseline loss trains without annealing unless asked for
        if cfg.loss == HeadKind::CrossEntropy && !lambda_given {
            cfg.lambda = LambdaSchedule::disabled();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical serialization: every effective key, fixed order. This text
    /// is stored inside checkpoints and reparsed on load.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("preset = {}\n", self.preset));
        s.push_str(&format!("loss = {}\n", self.loss.name()));
        s.push_str(&format!("margin = {}\n", self.margin));
        s.push_str(&format!("lambda_initial = {:?}\n", self.lambda.initial));
        s.push_str(&format!("lambda_floor = {:?}\n", self.lambda.floor));
        s.push_str(&format!("lambda_decay = {:?}\n", self.lambda.decay));
        s.push_str(&format!("optimizer = {}\n", self.optimizer.name()));
        s.push_str(&format!("lr = {:?}\n", self.lr));
        s.push_str(&format!("momentum = {:?}\n", self.momentum));
        s.push_str(&format!("weight_decay = {:?}\n", self.weight_decay));
        if let Some(act) = self.activation {
            s.push_str(&format!("activation = {}\n", act.name()));
        }
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("epochs = {}\n", self.epochs));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("data_root = {}\n", self.data_root.display()));
        s.push_str(&format!("split_ratio = {:?}\n", self.split_ratio));
        if let Some(tc) = self.train_count {
            s.push_str(&format!("train_count = {tc}\n"));
        }
        if let Some(vc) = self.val_count {
            s.push_str(&format!("val_count = {vc}\n"));
        }
        s.push_str(&format!("stratified = {}\n", self.stratified));
        s.push_str(&format!("metrics_window = {}\n", self.metrics_window));
        s.push_str(&format!("eval_clips = {}\n", self.eval_clips));
        s
    }

    /// Hash over the semantic keys: everything that changes what a trained
    /// model means. The training horizon (`epochs`), the dataset location
    /// and reporting options are excluded so a checkpoint can resume with a
    /// longer horizon or a relocated dataset.
    pub fn semantic_hash(&self) -> u64 {
        let mut s = String::new();
        s.push_str(&format!("preset = {}\n", self.preset));
        s.push_str(&format!("loss = {}\n", self.loss.name()));
        s.push_str(&format!("margin = {}\n", self.margin));
        s.push_str(&format!("lambda_initial = {:?}\n", self.lambda.initial));
        s.push_str(&format!("lambda_floor = {:?}\n", self.lambda.floor));
        s.push_str(&format!("lambda_decay = {:?}\n", self.lambda.decay));
        s.push_str(&format!("optimizer = {}\n", self.optimizer.name()));
        s.push_str(&format!("lr = {:?}\n", self.lr));
        s.push_str(&format!("momentum = {:?}\n", self.momentum));
        s.push_str(&format!("weight_decay = {:?}\n", self.weight_decay));
        if let Some(act) = self.activation {
            s.push_str(&format!("activation = {}\n", act.name()));
        }
        s.push_str(&format!("batch_size = {}\n", self.batch_size));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("split_ratio = {:?}\n", self.split_ratio));
        s.push_str(&format!("train_count = {:?}\n", self.train_count));
        s.push_str(&format!("val_count = {:?}\n", self.val_count));
        s.push_str(&format!("stratified = {}\n", self.stratified));
        s.push_str(&format!("eval_clips = {}\n", self.eval_clips));
        fnv1a64(s.as_bytes())
    }
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_defaults_and_values() {
        let cfg = TrainConfig::parse_str(
            "# experiment\npreset = desk-resnet18-basic\nmargin = 2 # inline\nseed = 9\ndata_root = /tmp/x\n",
        )
        .unwrap();
        assert_eq!(cfg.preset, "desk-resnet18-basic");
        assert_eq!(cfg.margin, 2);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.batch_size, 16);
        assert_eq!(cfg.lambda.initial, 1000.0);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = TrainConfig::parse_str("presett = x\n").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
    }

    #[test]
    fn duplicate_key_rejected() {
        let err = TrainConfig::parse_str("seed = 1\nseed = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
    }

    #[test]
    fn zero_epochs_rejected() {
        let err = TrainConfig::parse_str("epochs = 0\n").unwrap_err();
        assert!(err.to_string().contains("epochs"), "{err}");
    }

    #[test]
    fn canonical_text_reparses_to_same_hash() {
        let cfg = TrainConfig::parse_str("margin = 3\nseed = 4\nlr = 0.01\n").unwrap();
        let text = cfg.canonical_text();
        let back = TrainConfig::parse_str(&text).unwrap();
        assert_eq!(cfg.semantic_hash(), back.semantic_hash());
    }

    #[test]
    fn epochs_do_not_change_semantic_hash() {
        let a = TrainConfig::parse_str("epochs = 3\n").unwrap();
        let b = TrainConfig::parse_str("epochs = 11\n").unwrap();
        assert_eq!(a.semantic_hash(), b.semantic_hash());
        let c = TrainConfig::parse_str("epochs = 3\nmargin = 1\n").unwrap();
        assert_ne!(a.semantic_hash(), c.semantic_hash());
    }

    #[test]
    fn sgd_gets_its_own_default_lr() {
        let cfg = TrainConfig::parse_str("optimizer = sgd\n").unwrap();
        assert_eq!(cfg.lr, SGD_DEFAULT_LR);
        let cfg2 = TrainConfig::parse_str("optimizer = sgd\nlr = 0.05\n").unwrap();
        assert_eq!(cfg2.lr, 0.05);
    }

    #[test]
    fn fnv_vector() {
        // FNV-1a 64 of "a" per the published reference values
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
