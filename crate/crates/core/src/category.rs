//! Category-wise contrastive loss: within a batch, other rows with the
//! anchor's label are positives and rows with a different label are
//! negatives. The denominator runs over negatives only, so individual terms
//! (and the loss) may be negative.

use ndarray::Array2;

use crate::batch::LogitBatch;
use crate::config::LossConfig;
use crate::error::Result;
use crate::instance::check_aligned;
use crate::rows::{log_sum_exp, PreparedRows};
use crate::LossWithGrad;

/// Per-anchor positive and negative similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryScores {
    /// `pos_pairs[i]` holds `z_s^i · z_t^p` for every `p ≠ i` with the same label.
    pub pos_pairs: Vec<Vec<f64>>,
    /// `neg_pairs[i]` holds `z_s^i · z_t^n` for every `n` with a different label.
    pub neg_pairs: Vec<Vec<f64>>,
}

impl CategoryScores {
    pub fn pos_count(&self, i: usize) -> usize {
        self.pos_pairs[i].len()
    }

    pub fn neg_count(&self, i: usize) -> usize {
        self.neg_pairs[i].len()
    }
}

pub fn category_scores(student: &LogitBatch, teacher: &LogitBatch, config: &LossConfig) -> Result<CategoryScores> {
    check_aligned(student, teacher)?;
    let s = PreparedRows::new(student.values().view(), config.normalize_logits);
    let t = PreparedRows::new(teacher.values().view(), config.normalize_logits);
    let psi = s.rows.dot(&t.rows.t());
    let labels = student.labels();
    let b = labels.len();
    let mut pos_pairs = vec![Vec::new(); b];
    let mut neg_pairs = vec![Vec::new(); b];
    for i in 0..b {
        for j in 0..b {
            if labels[j] != labels[i] {
                neg_pairs[i].push(psi[[i, j]]);
            } else if j != i {
                pos_pairs[i].push(psi[[i, j]]);
            }
        }
    }
    Ok(CategoryScores { pos_pairs, neg_pairs })
}

/// Mean over anchors that have at least one positive and one negative; the
/// rest contribute nothing. Returns 0 when no anchor qualifies.
pub fn category_wise_loss(student: &LogitBatch, teacher: &LogitBatch, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    let scores = category_scores(student, teacher, config)?;
    let tau = config.tau;
    let mut total = 0.0;
    let mut anchors = 0usize;
    for (pos, neg) in scores.pos_pairs.iter().zip(&scores.neg_pairs) {
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let lse = log_sum_exp(neg.iter().map(|x| x / tau));
        let mean_pos = pos.iter().map(|x| x / tau).sum::<f64>() / pos.len() as f64;
        total += lse - mean_pos;
        anchors += 1;
    }
    Ok(if anchors == 0 { 0.0 } else { total / anchors as f64 })
}

pub fn category_wise_loss_grad(
    student: &LogitBatch,
    teacher: &LogitBatch,
    config: &LossConfig,
) -> Result<LossWithGrad> {
    config.validate()?;
    check_aligned(student, teacher)?;
    let s = PreparedRows::new(student.values().view(), config.normalize_logits);
    let t = PreparedRows::new(teacher.values().view(), config.normalize_logits);
    let tau = config.tau;
    let logits = s.rows.dot(&t.rows.t()) / tau;
    let labels = student.labels();
    let b = labels.len();

    // coef[i][j] = dL_i / d(psi_ij / tau)
    let mut coef = Array2::<f64>::zeros((b, b));
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..b {
        let negs: Vec<usize> = (0..b).filter(|&j| labels[j] != labels[i]).collect();
        let poss: Vec<usize> = (0..b).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if negs.is_empty() || poss.is_empty() {
            continue;
        }
        anchors += 1;
        let lse = log_sum_exp(negs.iter().map(|&n| logits[[i, n]]));
        let p = poss.len() as f64;
        total += lse - poss.iter().map(|&j| logits[[i, j]]).sum::<f64>() / p;
        for &n in &negs {
            coef[[i, n]] = (logits[[i, n]] - lse).exp();
        }
        for &j in &poss {
            coef[[i, j]] = -1.0 / p;
        }
    }
    if anchors == 0 {
        return Ok(LossWithGrad::zero(b, student.num_classes()));
    }
    coef /= anchors as f64 * tau;
    Ok(LossWithGrad { value: total / anchors as f64, grad: s.backprop(coef.dot(&t.rows)) })
}
