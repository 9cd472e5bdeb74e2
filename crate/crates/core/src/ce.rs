//! Hard-label cross-entropy, used as the task loss next to distillation terms.

use crate::batch::LogitBatch;
use crate::error::Result;
use crate::rows::{log_sum_exp_minus, softmax_rows};
use crate::LossWithGrad;

pub fn cross_entropy(logits: &LogitBatch) -> Result<f64> {
    let b = logits.batch_size() as f64;
    let total: f64 = logits
        .values()
        .rows()
        .into_iter()
        .zip(logits.labels())
        .map(|(r, &y)| log_sum_exp_minus(r.iter().copied(), r[y]))
        .sum();
    Ok(total / b)
}

pub fn cross_entropy_grad(logits: &LogitBatch) -> Result<LossWithGrad> {
    let value = cross_entropy(logits)?;
    let b = logits.batch_size() as f64;
    let mut grad = softmax_rows(logits.values().clone());
    for (i, &y) in logits.labels().iter().enumerate() {
        grad[[i, y]] -= 1.0;
    }
    grad /= b;
    Ok(LossWithGrad { value, grad })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits() {
        let b = LogitBatch::from_rows(&[vec![0.0; 4]], vec![2]).unwrap();
        assert!((cross_entropy(&b).unwrap() - 4f64.ln()).abs() < 1e-15);
        let g = cross_entropy_grad(&b).unwrap().grad;
        assert!((g[[0, 2]] + 0.75).abs() < 1e-15);
        assert!((g.sum()).abs() < 1e-15);
    }
}
