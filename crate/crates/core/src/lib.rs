//! Loss functions for contrastive logit distillation.
//!
//! Every loss here works on raw student and teacher logits ([`LogitBatch`]) in
//! double precision and comes in two flavours: a value-only function and a
//! `*_grad` variant that also returns the analytic gradient with respect to the
//! student logits. Training code backpropagates that gradient through the
//! student network; the teacher side is always treated as a constant.
//!
//! Three contrastive perspectives are provided:
//!
//! * [`instance`]: InfoNCE between a student row and its teacher row, with
//!   negatives drawn from a FIFO [`LogitQueue`] of past teacher logits. Queue
//!   entries sharing the anchor's label are masked out.
//! * [`sample`]: a `B`-way classification over the in-batch similarity matrix
//!   whose diagonal marks matching samples.
//! * [`category`]: a supervised-contrastive term where same-label rows of the
//!   batch are positives and different-label rows are negatives.
//!
//! [`objective::mcld_loss`] combines them with a warm-up weight on the
//! category term. [`kd`] holds the temperature-softened KL baseline and
//! [`ce`] the hard-label cross-entropy used as the task loss.

pub mod batch;
pub mod category;
pub mod ce;
pub mod config;
pub mod error;
pub mod instance;
pub mod kd;
pub mod objective;
pub mod queue;
pub mod sample;

mod rows;

pub use batch::LogitBatch;
pub use config::{LossConfig, MaskMode};
pub use error::{LossError, Result};
pub use objective::{mcld_loss, mcld_loss_grad, warmup_weight, Components, McldTerms};
pub use queue::{LogitQueue, ProductQueue, TargetMaskQueue};

use ndarray::Array2;

/// A scalar loss together with its gradient with respect to the student logits.
///
/// The gradient has the same `B×C` shape as the student batch and already
/// includes the `1/B` factor from averaging over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub value: f64,
    pub grad: Array2<f64>,
}

impl LossWithGrad {
    pub(crate) fn zero(rows: usize, cols: usize) -> Self {
        Self { value: 0.0, grad: Array2::zeros((rows, cols)) }
    }
}
