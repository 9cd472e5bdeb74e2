//! FIFO memory of past teacher logits and their labels.
//!
//! The two halves always advance together: [`LogitQueue::enqueue`] is the only
//! way to write, so row `j` of the product queue and entry `j` of the target
//! mask queue were always pushed in the same call.

use ndarray::{Array2, ArrayView1};

use crate::batch::LogitBatch;
use crate::error::{LossError, Result};

/// Ring buffer of teacher logit rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductQueue {
    entries: Array2<f64>,
    write_cursor: usize,
    fill_count: usize,
}

/// Labels parallel to the rows of a [`ProductQueue`].
#[derive(Debug, Clone, PartialEq)]
pub struct TargetMaskQueue {
    labels: Vec<usize>,
    write_cursor: usize,
    fill_count: usize,
}

impl ProductQueue {
    pub fn capacity(&self) -> usize {
        self.entries.nrows()
    }

    pub fn width(&self) -> usize {
        self.entries.ncols()
    }

    pub fn fill_count(&self) -> usize {
        self.fill_count
    }

    pub fn write_cursor(&self) -> usize {
        self.write_cursor
    }

    fn slot(&self, j: usize) -> usize {
        if self.fill_count < self.capacity() {
            j
        } else {
            (self.write_cursor + j) % self.capacity()
        }
    }

    /// Row `j` in arrival order (`0` is the oldest retained row).
    pub fn row(&self, j: usize) -> ArrayView1<'_, f64> {
        assert!(j < self.fill_count, "queue row {j} out of range");
        self.entries.row(self.slot(j))
    }

    /// The filled region copied out in arrival order.
    pub fn ordered_rows(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.fill_count, self.width()));
        for j in 0..self.fill_count {
            out.row_mut(j).assign(&self.row(j));
        }
        out
    }
}

impl TargetMaskQueue {
    pub fn fill_count(&self) -> usize {
        self.fill_count
    }

    pub fn write_cursor(&self) -> usize {
        self.write_cursor
    }

    /// Label `j` in arrival order.
    pub fn label(&self, j: usize) -> usize {
        assert!(j < self.fill_count, "queue label {j} out of range");
        let k = self.labels.len();
        let slot = if self.fill_count < k { j } else { (self.write_cursor + j) % k };
        self.labels[slot]
    }

    pub fn ordered_labels(&self) -> Vec<usize> {
        (0..self.fill_count).map(|j| self.label(j)).collect()
    }
}

/// A product queue and its target mask queue, updated in lockstep.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitQueue {
    product: ProductQueue,
    target_mask: TargetMaskQueue,
}

impl LogitQueue {
    pub fn new(capacity: usize, num_classes: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(LossError::Config("queue capacity must be at least 1".into()));
        }
        if num_classes < 2 {
            return Err(LossError::Validation(format!("queue rows need at least 2 classes, got {num_classes}")));
        }
        Ok(Self {
            product: ProductQueue { entries: Array2::zeros((capacity, num_classes)), write_cursor: 0, fill_count: 0 },
            target_mask: TargetMaskQueue { labels: vec![0; capacity], write_cursor: 0, fill_count: 0 },
        })
    }

    /// Rebuilds a queue from rows and labels listed oldest first, e.g. from a
    /// checkpoint. Only the last `capacity` rows are kept.
    pub fn from_ordered(capacity: usize, rows: &Array2<f64>, labels: &[usize]) -> Result<Self> {
        let mut q = Self::new(capacity, rows.ncols())?;
        if rows.nrows() == 0 && labels.is_empty() {
            return Ok(q);
        }
        let batch = LogitBatch::new(rows.clone(), labels.to_vec())?;
        q.enqueue(&batch)?;
        Ok(q)
    }

    pub fn product(&self) -> &ProductQueue {
        &self.product
    }

    pub fn target_mask(&self) -> &TargetMaskQueue {
        &self.target_mask
    }

    pub fn capacity(&self) -> usize {
        self.product.capacity()
    }

    pub fn width(&self) -> usize {
        self.product.width()
    }

    pub fn len(&self) -> usize {
        self.product.fill_count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends every row of `teacher` with its label, evicting the oldest
    /// entries once the capacity is reached.
    pub fn enqueue(&mut self, teacher: &LogitBatch) -> Result<()> {
        if teacher.num_classes() != self.width() {
            return Err(LossError::dimension("queue row width", self.width(), teacher.num_classes()));
        }
        let k = self.capacity();
        for (row, &label) in teacher.values().rows().into_iter().zip(teacher.labels()) {
            let slot = self.product.write_cursor;
            debug_assert_eq!(slot, self.target_mask.write_cursor);
            self.product.entries.row_mut(slot).assign(&row);
            self.target_mask.labels[slot] = label;
            self.product.write_cursor = (slot + 1) % k;
            self.target_mask.write_cursor = self.product.write_cursor;
            if self.product.fill_count < k {
                self.product.fill_count += 1;
                self.target_mask.fill_count += 1;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(v: f64, label: usize) -> LogitBatch {
        LogitBatch::from_rows(&[vec![v, -v]], vec![label]).unwrap()
    }

    #[test]
    fn fifo_eviction_keeps_most_recent() {
        let mut q = LogitQueue::new(2, 2).unwrap();
        for (v, y) in [(1.0, 0), (2.0, 1), (3.0, 0)] {
            q.enqueue(&one(v, y)).unwrap();
        }
        assert_eq!(q.len(), 2);
        assert_eq!(q.product().row(0).to_vec(), vec![2.0, -2.0]);
        assert_eq!(q.product().row(1).to_vec(), vec![3.0, -3.0]);
        assert_eq!(q.target_mask().ordered_labels(), vec![1, 0]);
    }

    #[test]
    fn batch_enqueue_into_empty_queue() {
        let mut q = LogitQueue::new(8, 3).unwrap();
        let b = LogitBatch::from_rows(
            &[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 1.0, 1.0]],
            vec![2, 1, 0, 1],
        )
        .unwrap();
        q.enqueue(&b).unwrap();
        assert_eq!(q.product().fill_count(), 4);
        assert_eq!(q.target_mask().fill_count(), 4);
        assert_eq!(q.target_mask().ordered_labels(), vec![2, 1, 0, 1]);
        assert_eq!(q.product().ordered_rows(), *b.values());
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let mut q = LogitQueue::new(4, 3).unwrap();
        assert!(matches!(q.enqueue(&one(1.0, 0)), Err(LossError::Dimension { .. })));
        assert!(q.is_empty());
    }

    #[test]
    fn rebuild_from_ordered_snapshot() {
        let mut q = LogitQueue::new(3, 2).unwrap();
        for i in 0..7 {
            q.enqueue(&one(i as f64, i % 2)).unwrap();
        }
        let r = LogitQueue::from_ordered(3, &q.product().ordered_rows(), &q.target_mask().ordered_labels()).unwrap();
        assert_eq!(r.product().ordered_rows(), q.product().ordered_rows());
        assert_eq!(r.target_mask().ordered_labels(), q.target_mask().ordered_labels());
    }
}
