//! Instance-wise contrastive loss: each student row against its own teacher
//! row (positive) and the queued teacher rows of other labels (negatives).

use ndarray::{Array1, Array2, Axis, Zip};

use crate::batch::LogitBatch;
use crate::config::{LossConfig, MaskMode};
use crate::error::{LossError, Result};
use crate::queue::LogitQueue;
use crate::rows::{log_sum_exp_minus, PreparedRows};
use crate::LossWithGrad;

/// Dot-product similarities for one batch against the current queue.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityScores {
    /// `positive[i] = z_s^i · z_t^i`.
    pub positive: Array1<f64>,
    /// `negatives[i][j] = z_s^i · q_j` for queue rows in arrival order.
    pub negatives: Array2<f64>,
    /// `true` where the queue label differs from the anchor label, i.e. the
    /// entry acts as a negative.
    pub mask: Array2<bool>,
}

pub(crate) fn check_aligned(student: &LogitBatch, teacher: &LogitBatch) -> Result<()> {
    student.check_same_shape(teacher, "teacher logits")?;
    if student.labels() != teacher.labels() {
        return Err(LossError::Validation("student and teacher batches carry different labels".into()));
    }
    Ok(())
}

struct Prepared {
    student: PreparedRows,
    teacher: PreparedRows,
    queue: PreparedRows,
    scores: SimilarityScores,
}

fn prepare(student: &LogitBatch, teacher: &LogitBatch, queue: &LogitQueue, normalize: bool) -> Result<Prepared> {
    check_aligned(student, teacher)?;
    if queue.width() != student.num_classes() {
        return Err(LossError::dimension("queue row width", student.num_classes(), queue.width()));
    }
    let s = PreparedRows::new(student.values().view(), normalize);
    let t = PreparedRows::new(teacher.values().view(), normalize);
    let q = PreparedRows::new(queue.product().ordered_rows().view(), normalize);

    let positive = Zip::from(s.rows.rows()).and(t.rows.rows()).map_collect(|a, b| a.dot(&b));
    let negatives = s.rows.dot(&q.rows.t());
    let queue_labels = queue.target_mask().ordered_labels();
    let mask = Array2::from_shape_fn(negatives.dim(), |(i, j)| student.labels()[i] != queue_labels[j]);
    Ok(Prepared { student: s, teacher: t, queue: q, scores: SimilarityScores { positive, negatives, mask } })
}

/// Similarities between the student batch, its teacher rows and the queue.
///
/// With `normalize_logits` every row is scaled to unit norm first.
pub fn compute_instance_scores(
    student: &LogitBatch,
    teacher: &LogitBatch,
    queue: &LogitQueue,
    config: &LossConfig,
) -> Result<SimilarityScores> {
    Ok(prepare(student, teacher, queue, config.normalize_logits)?.scores)
}

/// Per-anchor softmax over `[positive, negatives...]`, returned as
/// `(loss_i, p_positive, p_negatives)`. Masked entries get probability 0 in
/// both modes since they carry no dependence on the student.
fn anchor_terms(scores: &SimilarityScores, i: usize, tau: f64, mode: MaskMode, p_neg: &mut [f64]) -> (f64, f64) {
    let s0 = scores.positive[i] / tau;
    let negs = scores.negatives.row(i);
    let mask = scores.mask.row(i);
    let logit = |j: usize| -> Option<f64> {
        match (mask[j], mode) {
            (true, _) => Some(negs[j] / tau),
            (false, MaskMode::Exclude) => None,
            (false, MaskMode::PaperLiteralMultiply) => Some(0.0),
        }
    };
    // loss = log Σ exp(s) - s0
    let loss = log_sum_exp_minus(std::iter::once(s0).chain((0..negs.len()).filter_map(logit)), s0);
    for (j, p) in p_neg.iter_mut().enumerate() {
        *p = if mask[j] { (negs[j] / tau - s0 - loss).exp() } else { 0.0 };
    }
    (loss, (-loss).exp())
}

fn check_scores(scores: &SimilarityScores) -> Result<()> {
    let b = scores.positive.len();
    if b == 0 {
        return Err(LossError::Validation("empty similarity scores".into()));
    }
    if scores.negatives.nrows() != b || scores.mask.dim() != scores.negatives.dim() {
        return Err(LossError::dimension(
            "similarity scores",
            format!("{b} rows with matching mask"),
            format!("{:?} / {:?}", scores.negatives.dim(), scores.mask.dim()),
        ));
    }
    Ok(())
}

/// InfoNCE as a `(K+1)`-way cross-entropy with the positive at position 0,
/// averaged over the batch.
pub fn instance_wise_loss(scores: &SimilarityScores, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    check_scores(scores)?;
    let b = scores.positive.len();
    let mut scratch = vec![0.0; scores.negatives.ncols()];
    let total: f64 = (0..b).map(|i| anchor_terms(scores, i, config.tau, config.mask_mode, &mut scratch).0).sum();
    Ok(total / b as f64)
}

/// [`instance_wise_loss`] plus its gradient with respect to the student logits.
pub fn instance_wise_loss_grad(
    student: &LogitBatch,
    teacher: &LogitBatch,
    queue: &LogitQueue,
    config: &LossConfig,
) -> Result<LossWithGrad> {
    config.validate()?;
    let prep = prepare(student, teacher, queue, config.normalize_logits)?;
    let scores = &prep.scores;
    let (b, k) = scores.negatives.dim();
    let tau = config.tau;
    let inv = 1.0 / (b as f64 * tau);

    let mut coef_neg = Array2::<f64>::zeros((b, k));
    let mut coef_pos = Array1::<f64>::zeros(b);
    let mut total = 0.0;
    for (i, mut row) in coef_neg.axis_iter_mut(Axis(0)).enumerate() {
        let slice = row.as_slice_mut().expect("standard layout");
        let (loss, p0) = anchor_terms(scores, i, tau, config.mask_mode, slice);
        total += loss;
        coef_pos[i] = (p0 - 1.0) * inv;
        row.mapv_inplace(|p| p * inv);
    }

    let mut grad = coef_neg.dot(&prep.queue.rows);
    Zip::from(grad.rows_mut())
        .and(prep.teacher.rows.rows())
        .and(&coef_pos)
        .for_each(|mut g, t, &c| g.scaled_add(c, &t));
    Ok(LossWithGrad { value: total / b as f64, grad: prep.student.backprop(grad) })
}
