//! The combined objective `L_inst + L_samp + ω·L_cate` and its warm-up weight.

use serde::{Deserialize, Serialize};

use crate::batch::LogitBatch;
use crate::category::{category_wise_loss, category_wise_loss_grad};
use crate::config::LossConfig;
use crate::error::Result;
use crate::instance::{compute_instance_scores, instance_wise_loss, instance_wise_loss_grad};
use crate::queue::LogitQueue;
use crate::sample::{sample_wise_loss, sample_wise_loss_grad};
use ndarray::Array2;

/// Linear ramp `min(1, epoch / warmup_end_epoch)`.
pub fn warmup_weight(epoch: usize, config: &LossConfig) -> f64 {
    let end = config.warmup_end_epoch.max(1);
    (epoch as f64 / end as f64).min(1.0)
}

/// Which of the three contrastive terms take part in the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct Components {
    pub instance: bool,
    pub sample: bool,
    pub category: bool,
}

impl Default for Components {
    fn default() -> Self {
        Self::ALL
    }
}

impl Components {
    pub const ALL: Self = Self { instance: true, sample: true, category: true };
    pub const NONE: Self = Self { instance: false, sample: false, category: false };

    pub fn any(&self) -> bool {
        self.instance || self.sample || self.category
    }
}

/// Individual terms of one evaluation of the objective. Disabled terms are 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct McldTerms {
    pub instance: f64,
    pub sample: f64,
    pub category: f64,
    pub omega: f64,
    pub total: f64,
}

/// Evaluates the objective without touching the queue. Callers enqueue the
/// teacher batch themselves once the step is done.
pub fn mcld_loss(
    student: &LogitBatch,
    teacher: &LogitBatch,
    queue: &LogitQueue,
    epoch: usize,
    config: &LossConfig,
    components: Components,
) -> Result<McldTerms> {
    config.validate()?;
    let mut terms = McldTerms { omega: warmup_weight(epoch, config), ..Default::default() };
    if components.instance {
        let scores = compute_instance_scores(student, teacher, queue, config)?;
        terms.instance = instance_wise_loss(&scores, config)?;
    }
    if components.sample {
        terms.sample = sample_wise_loss(student, teacher, config)?;
    }
    if components.category {
        terms.category = category_wise_loss(student, teacher, config)?;
    }
    terms.total = terms.instance + terms.sample + terms.omega * terms.category;
    Ok(terms)
}

/// [`mcld_loss`] together with the gradient of `total` w.r.t. the student logits.
pub fn mcld_loss_grad(
    student: &LogitBatch,
    teacher: &LogitBatch,
    queue: &LogitQueue,
    epoch: usize,
    config: &LossConfig,
    components: Components,
) -> Result<(McldTerms, Array2<f64>)> {
    config.validate()?;
    let mut terms = McldTerms { omega: warmup_weight(epoch, config), ..Default::default() };
    let mut grad = Array2::zeros(student.values().dim());
    if components.instance {
        let l = instance_wise_loss_grad(student, teacher, queue, config)?;
        terms.instance = l.value;
        grad += &l.grad;
    }
    if components.sample {
        let l = sample_wise_loss_grad(student, teacher, config)?;
        terms.sample = l.value;
        grad += &l.grad;
    }
    if components.category {
        let l = category_wise_loss_grad(student, teacher, config)?;
        terms.category = l.value;
        grad.scaled_add(terms.omega, &l.grad);
    }
    terms.total = terms.instance + terms.sample + terms.omega * terms.category;
    Ok((terms, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(end: usize) -> LossConfig {
        LossConfig { warmup_end_epoch: end, tau: 0.5, ..Default::default() }
    }

    #[test]
    fn warmup_ramp() {
        let c = cfg(10);
        assert_eq!(warmup_weight(0, &c), 0.0);
        assert_eq!(warmup_weight(5, &c), 0.5);
        assert_eq!(warmup_weight(10, &c), 1.0);
        assert_eq!(warmup_weight(400, &c), 1.0);
        let mut prev = 0.0;
        for e in 0..30 {
            let w = warmup_weight(e, &c);
            assert!(w >= prev);
            prev = w;
        }
    }

    fn fixture() -> (LogitBatch, LogitBatch, LogitQueue) {
        let s =
            LogitBatch::from_rows(&[vec![0.2, 1.0, -0.5], vec![1.1, -0.3, 0.4], vec![0.0, 0.7, 0.9]], vec![0, 0, 2])
                .unwrap();
        let t =
            LogitBatch::from_rows(&[vec![0.5, 0.8, -0.1], vec![0.9, 0.1, 0.2], vec![-0.4, 0.3, 1.2]], vec![0, 0, 2])
                .unwrap();
        let mut q = LogitQueue::new(4, 3).unwrap();
        q.enqueue(&LogitBatch::from_rows(&[vec![1.0, 2.0, 3.0], vec![0.5, -1.0, 0.0]], vec![1, 2]).unwrap()).unwrap();
        (s, t, q)
    }

    #[test]
    fn epoch_zero_drops_category() {
        let (s, t, q) = fixture();
        let terms = mcld_loss(&s, &t, &q, 0, &cfg(5), Components::ALL).unwrap();
        assert_eq!(terms.omega, 0.0);
        assert_eq!(terms.total, terms.instance + terms.sample);
        assert!(terms.category != 0.0);
    }

    #[test]
    fn components_gate_terms() {
        let (s, t, q) = fixture();
        let c = cfg(1);
        let all = mcld_loss(&s, &t, &q, 3, &c, Components::ALL).unwrap();
        let none = mcld_loss(&s, &t, &q, 3, &c, Components::NONE).unwrap();
        assert_eq!(none.total, 0.0);
        let only = |instance, sample, category| {
            mcld_loss(&s, &t, &q, 3, &c, Components { instance, sample, category }).unwrap().total
        };
        assert_eq!(only(true, false, false), all.instance);
        assert_eq!(only(false, true, false), all.sample);
        assert_eq!(only(false, false, true), all.category);
        let sum = all.instance + all.sample + all.category;
        assert!((sum - all.total).abs() <= 1e-6 * all.total.abs().max(1.0));
    }

    #[test]
    fn grad_variant_agrees_and_leaves_queue_alone() {
        let (s, t, q) = fixture();
        let before = q.clone();
        let a = mcld_loss(&s, &t, &q, 2, &cfg(4), Components::ALL).unwrap();
        let (b, g) = mcld_loss_grad(&s, &t, &q, 2, &cfg(4), Components::ALL).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        assert_eq!(g.dim(), (3, 3));
        assert_eq!(q, before);
    }
}
