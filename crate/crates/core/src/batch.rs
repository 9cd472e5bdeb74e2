use ndarray::{Array2, ArrayView1};

use crate::error::{LossError, Result};

/// A batch of raw (pre-softmax) logits with one ground-truth label per row.
///
/// Construction validates the shape (`B ≥ 1`, `C ≥ 2`), that every value is
/// finite, and that every label lies in `[0, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBatch {
    values: Array2<f64>,
    labels: Vec<usize>,
}

impl LogitBatch {
    pub fn new(values: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        let (rows, cols) = values.dim();
        if rows == 0 {
            return Err(LossError::Validation("batch must hold at least one row".into()));
        }
        if cols < 2 {
            return Err(LossError::Validation(format!("logits need at least 2 classes, got {cols}")));
        }
        if labels.len() != rows {
            return Err(LossError::dimension("labels", rows, labels.len()));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= cols) {
            return Err(LossError::Validation(format!("label {bad} out of range for {cols} classes")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LossError::Validation("logits contain NaN or Inf".into()));
        }
        Ok(Self { values, labels })
    }

    /// Builds a batch from nested rows; all rows must have the same width.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<usize>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != width) {
            return Err(LossError::dimension("row width", width, r.len()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values =
            Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| LossError::Validation(e.to_string()))?;
        Self::new(values, labels)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn batch_size(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.values.ncols()
    }

    /// Returns a copy with rows (and labels) reordered so that row `k` of the
    /// result is row `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.batch_size() {
            return Err(LossError::dimension("permutation", self.batch_size(), perm.len()));
        }
        let values = self.values.select(ndarray::Axis(0), perm);
        let labels = perm.iter().map(|&i| self.labels[i]).collect();
        Self::new(values, labels)
    }

    pub(crate) fn check_same_shape(&self, other: &LogitBatch, what: &'static str) -> Result<()> {
        if self.values.dim() != other.values.dim() {
            return Err(LossError::dimension(
                what,
                format!("{:?}", self.values.dim()),
                format!("{:?}", other.values.dim()),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn rejects_bad_batches() {
        assert!(LogitBatch::new(array![[1.0, f64::NAN]], vec![0]).is_err());
        assert!(LogitBatch::new(array![[1.0, 2.0]], vec![2]).is_err());
        assert!(LogitBatch::new(array![[1.0], [2.0]], vec![0, 0]).is_err());
        assert!(matches!(LogitBatch::new(array![[1.0, 2.0]], vec![0, 1]), Err(LossError::Dimension { .. })));
        assert!(LogitBatch::new(Array2::zeros((0, 3)), vec![]).is_err());
        assert!(LogitBatch::from_rows(&[vec![1.0, 2.0], vec![1.0]], vec![0, 0]).is_err());
    }

    #[test]
    fn permutation_moves_labels_with_rows() {
        let b = LogitBatch::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]], vec![0, 1]).unwrap();
        let p = b.permuted(&[1, 0]).unwrap();
        assert_eq!(p.labels(), &[1, 0]);
        assert_eq!(p.row(0).to_vec(), vec![0.0, 1.0]);
    }
}
