//! Run configuration, read from TOML.
//!
//! ```toml
//! method = "mcld"          # mcld | kd | none
//! seed = 1
//! epochs = 30
//! output_dir = "runs/mcld"
//!
//! [teacher]
//! checkpoint = "runs/teacher/best.ckpt"
//! model = { architecture = "resnet", depth = 2, width = 16, num_classes = 10 }
//!
//! [student]
//! architecture = "plain_conv"
//! depth = 3
//! width = 8
//! num_classes = 10
//!
//! [dataset]
//! source = "synthetic"
//! num_classes = 10
//! image_shape = [3, 16, 16]
//!
//! [loss]
//! tau = 0.07
//!
//! [kd]
//! tau = 4.0
//!
//! [ablation]
//! category = false
//!
//! [optimizer]
//! lr = 0.05
//! lr_decay_epochs = [20, 25]
//! ```
//!
//! When `loss.warmup_end_epoch` is absent it defaults to
//! `round(155 / 240 * epochs)`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mcld_core::{Components, LossConfig};
use mcld_models::{DatasetSpec, ModelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TrainError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Mcld,
    Kd,
    /// Hard-label cross-entropy only.
    None,
}

impl FromStr for Method {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mcld" => Ok(Self::Mcld),
            "kd" => Ok(Self::Kd),
            "none" | "ce" => Ok(Self::None),
            other => Err(TrainError::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mcld => "mcld",
            Self::Kd => "kd",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

/// Classic KD: `weight * tau^2 * KL + ce_weight * CE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdConfig {
    pub tau: f64,
    pub weight: f64,
    pub ce_weight: f64,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self { tau: mcld_core::kd::DEFAULT_KD_TAU, weight: 0.9, ce_weight: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// 1-based epochs after which the learning rate is multiplied by
    /// `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { lr: 0.05, momentum: 0.9, weight_decay: 5e-4, lr_decay_epochs: vec![150, 180, 210], lr_decay_factor: 0.1 }
    }
}

impl OptimizerConfig {
    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay_epochs.iter().filter(|&&d| epoch > d).count();
        self.lr * self.lr_decay_factor.powi(decays as i32)
    }

    /// The 240-epoch decay points `{150, 180, 210}` scaled to `epochs`.
    pub fn proportional_decay(epochs: usize) -> Vec<usize> {
        let mut out: Vec<usize> = [150usize, 180, 210]
            .iter()
            .map(|&d| ((d * epochs) as f64 / 240.0).round() as usize)
            .filter(|&d| d >= 1 && d < epochs)
            .collect();
        out.dedup();
        out
    }
}

/// `round(155 / 240 * epochs)`, at least 1.
pub fn proportional_warmup_end(epochs: usize) -> usize {
    (((155 * epochs) as f64 / 240.0).round() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillRunConfig {
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Continue from `last.ckpt` in `output_dir` when it exists.
    #[serde(default)]
    pub resume: bool,
    /// Stop after this many epochs even if `epochs` is larger. The schedule
    /// still follows `epochs`, so a later resume continues the same run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_after_epoch: Option<usize>,
    pub teacher: TeacherConfig,
    pub student: ModelSpec,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub loss: LossConfig,
    #[serde(default)]
    pub kd: KdConfig,
    #[serde(default)]
    pub ablation: Components,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl DistillRunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse()?;
        let has_warmup = raw.get("loss").and_then(|l| l.as_table()).is_some_and(|l| l.contains_key("warmup_end_epoch"));
        let mut cfg: Self = toml::from_str(text)?;
        if !has_warmup {
            cfg.loss.warmup_end_epoch = proportional_warmup_end(cfg.epochs);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(TrainError::Config("epochs must be positive".into()));
        }
        let decay = &self.optimizer.lr_decay_epochs;
        if decay.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrainError::Config("lr_decay_epochs must be strictly increasing".into()));
        }
        if decay.last().is_some_and(|&d| d >= self.epochs) {
            return Err(TrainError::Config(format!("lr_decay_epochs must be below epochs ({})", self.epochs)));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.momentum >= 0.0 && o.momentum < 1.0 && o.weight_decay >= 0.0) {
            return Err(TrainError::Config("optimizer needs lr > 0, 0 <= momentum < 1, weight_decay >= 0".into()));
        }
        if !(self.kd.tau > 0.0 && self.kd.weight >= 0.0 && self.kd.ce_weight >= 0.0) {
            return Err(TrainError::Config("kd needs tau > 0 and nonnegative weights".into()));
        }
        if self.loss.task_ce_weight < 0.0 {
            return Err(TrainError::Config("task_ce_weight must be nonnegative".into()));
        }
        self.loss.validate()?;
        self.dataset.validate()?;
        self.student.validate()?;
        self.teacher.model.validate()?;
        for (who, spec) in [("student", &self.student), ("teacher", &self.teacher.model)] {
            if spec.num_classes != self.dataset.num_classes {
                return Err(TrainError::Config(format!(
                    "{who} has {} classes, dataset has {}",
                    spec.num_classes, self.dataset.num_classes
                )));
            }
            if spec.in_channels != self.dataset.image_shape[0] {
                return Err(TrainError::Config(format!(
                    "{who} expects {} input channels, dataset images have {}",
                    spec.in_channels, self.dataset.image_shape[0]
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over every setting that influences the trained weights.
    /// Output location, resume flag, stop point and the teacher checkpoint
    /// path are left out.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.resume = false;
        canonical.stop_after_epoch = None;
        canonical.teacher.checkpoint = None;
        let json = serde_json::to_vec(&canonical).expect("run configuration serializes");
        Sha256::digest(&json).into()
    }

    pub fn fingerprint_hex(&self) -> String {
        hex::encode(self.fingerprint())
    }
}
