//! Temperature-softened KL distillation, the classic logit baseline.

use ndarray::{Array2, ArrayView1};

use crate::batch::LogitBatch;
use crate::error::{LossError, Result};
use crate::rows::softmax_rows;
use crate::LossWithGrad;

/// Conventional temperature for the baseline on CIFAR-style benchmarks.
pub const DEFAULT_KD_TAU: f64 = 4.0;

/// `softmax(z / tau)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityDistribution {
    pub probs: Vec<f64>,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(LossError::Config(format!("temperature must be positive, got {tau}")))
    }
}

pub fn softened_probs(logits: ArrayView1<'_, f64>, tau: f64) -> Result<ProbabilityDistribution> {
    check_tau(tau)?;
    if logits.is_empty() {
        return Err(LossError::Validation("empty logit vector".into()));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(LossError::Validation("logits contain NaN or Inf".into()));
    }
    let max = logits.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = logits.iter().map(|z| ((z - max) / tau).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(ProbabilityDistribution { probs: exps.into_iter().map(|e| e / sum).collect() })
}

fn softened(batch: &LogitBatch, tau: f64) -> Array2<f64> {
    softmax_rows(batch.values() / tau)
}

/// `mean_i tau² · KL(p_t^i || p_s^i)` with both sides softened by `tau`.
pub fn kd_loss(student: &LogitBatch, teacher: &LogitBatch, tau: f64) -> Result<f64> {
    Ok(kd_loss_grad(student, teacher, tau)?.value)
}

/// [`kd_loss`] and its gradient `tau (p_s - p_t) / B`. The teacher is a constant.
pub fn kd_loss_grad(student: &LogitBatch, teacher: &LogitBatch, tau: f64) -> Result<LossWithGrad> {
    check_tau(tau)?;
    student.check_same_shape(teacher, "teacher logits")?;
    let b = student.batch_size() as f64;
    let ps = softened(student, tau);
    let pt = softened(teacher, tau);
    // Work in log space for the KL so tiny probabilities do not underflow to 0.
    let ls = log_softmax_rows(&(student.values() / tau));
    let lt = log_softmax_rows(&(teacher.values() / tau));
    let kl: f64 =
        pt.iter().zip(lt.iter().zip(ls.iter())).map(|(&p, (&a, &c))| if p > 0.0 { p * (a - c) } else { 0.0 }).sum();
    let grad = (ps - &pt) * (tau / b);
    Ok(LossWithGrad { value: tau * tau * kl.max(0.0) / b, grad })
}

fn log_softmax_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut r in out.rows_mut() {
        let max = r.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = max + r.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        r.mapv_inplace(|x| x - lse);
    }
    out
}
