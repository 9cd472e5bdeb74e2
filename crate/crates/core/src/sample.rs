//! Sample-wise contrastive loss: a `B`-way classification over the in-batch
//! student/teacher similarity matrix, where the target of row `i` is column `i`.

use ndarray::Array2;

use crate::batch::LogitBatch;
use crate::config::LossConfig;
use crate::error::Result;
use crate::rows::{log_sum_exp_minus, softmax_rows, PreparedRows};
use crate::LossWithGrad;

/// `eta[i][j] = z_s^i · z_t^j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub eta: Array2<f64>,
}

pub fn similarity_matrix(student: &LogitBatch, teacher: &LogitBatch, config: &LossConfig) -> Result<SimilarityMatrix> {
    student.check_same_shape(teacher, "teacher logits")?;
    let s = PreparedRows::new(student.values().view(), config.normalize_logits);
    let t = PreparedRows::new(teacher.values().view(), config.normalize_logits);
    Ok(SimilarityMatrix { eta: s.rows.dot(&t.rows.t()) })
}

/// Mean cross-entropy of `eta / tau` rows against targets `0..B`.
pub fn sample_wise_loss(student: &LogitBatch, teacher: &LogitBatch, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    let eta = similarity_matrix(student, teacher, config)?.eta;
    let b = eta.nrows();
    let total: f64 = eta
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| log_sum_exp_minus(r.iter().map(|x| x / config.tau), r[i] / config.tau))
        .sum();
    Ok(total / b as f64)
}

pub fn sample_wise_loss_grad(student: &LogitBatch, teacher: &LogitBatch, config: &LossConfig) -> Result<LossWithGrad> {
    config.validate()?;
    student.check_same_shape(teacher, "teacher logits")?;
    let s = PreparedRows::new(student.values().view(), config.normalize_logits);
    let t = PreparedRows::new(teacher.values().view(), config.normalize_logits);
    let logits = s.rows.dot(&t.rows.t()) / config.tau;
    let b = logits.nrows();
    let value =
        logits.rows().into_iter().enumerate().map(|(i, r)| log_sum_exp_minus(r.iter().copied(), r[i])).sum::<f64>()
            / b as f64;

    // d/d eta = (softmax - I) / (B tau); d/d s = that · T.
    let mut coef = softmax_rows(logits);
    for i in 0..b {
        coef[[i, i]] -= 1.0;
    }
    coef /= b as f64 * config.tau;
    let grad = coef.dot(&t.rows);
    Ok(LossWithGrad { value, grad: s.backprop(grad) })
}
