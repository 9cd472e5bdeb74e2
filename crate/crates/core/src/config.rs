use serde::{Deserialize, Serialize};

use crate::error::{LossError, Result};

/// How queue entries whose label matches the anchor are treated by the
/// instance-wise loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Same-label queue entries are dropped from the denominator.
    #[default]
    Exclude,
    /// The mask multiplies the similarity inside the exponent, so a masked
    /// entry still contributes `exp(0) = 1` to the denominator.
    PaperLiteralMultiply,
}

impl std::str::FromStr for MaskMode {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(Self::Exclude),
            "paper_literal_multiply" | "multiply" => Ok(Self::PaperLiteralMultiply),
            other => Err(LossError::Config(format!("unknown mask mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Contrastive temperature.
    pub tau: f64,
    /// Number of teacher logit rows kept in the negative queue.
    pub queue_capacity: usize,
    pub mask_mode: MaskMode,
    /// Scale every logit row to unit L2 norm before taking dot products.
    pub normalize_logits: bool,
    /// Epoch at which the category-term weight reaches 1.
    pub warmup_end_epoch: usize,
    pub include_task_ce: bool,
    pub task_ce_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau: 0.07,
            queue_capacity: 8192,
            mask_mode: MaskMode::Exclude,
            normalize_logits: false,
            warmup_end_epoch: 155,
            include_task_ce: true,
            task_ce_weight: 1.0,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(LossError::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if self.queue_capacity == 0 {
            return Err(LossError::Config("queue_capacity must be at least 1".into()));
        }
        if self.warmup_end_epoch == 0 {
            return Err(LossError::Config("warmup_end_epoch must be at least 1".into()));
        }
        if !(self.task_ce_weight >= 0.0 && self.task_ce_weight.is_finite()) {
            return Err(LossError::Config(format!("task_ce_weight must be nonnegative, got {}", self.task_ce_weight)));
        }
        Ok(())
    }
}
