//! Random small instances for the oracle and gradient checks.
#![allow(dead_code)]

use mcld_core::{LogitBatch, LogitQueue};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub student: Vec<Vec<f64>>,
    pub teacher: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub queue_rows: Vec<Vec<f64>>,
    pub queue_labels: Vec<usize>,
    pub capacity: usize,
}

impl Instance {
    pub fn random(seed: u64, max_b: usize, max_c: usize, max_fill: usize, scale: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = rng.random_range(1..=max_b);
        let c = rng.random_range(2..=max_c);
        let fill = rng.random_range(0..=max_fill);
        let mat = |rows: usize, rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..rows).map(|_| (0..c).map(|_| rng.random_range(-scale..scale)).collect()).collect()
        };
        let student = mat(b, &mut rng);
        let teacher = mat(b, &mut rng);
        let queue_rows = mat(fill, &mut rng);
        let labels = (0..b).map(|_| rng.random_range(0..c)).collect();
        let queue_labels = (0..fill).map(|_| rng.random_range(0..c)).collect();
        Self { student, teacher, labels, queue_rows, queue_labels, capacity: fill.max(1) }
    }

    pub fn student_batch(&self) -> LogitBatch {
        LogitBatch::from_rows(&self.student, self.labels.clone()).unwrap()
    }

    pub fn teacher_batch(&self) -> LogitBatch {
        LogitBatch::from_rows(&self.teacher, self.labels.clone()).unwrap()
    }

    pub fn queue(&self) -> LogitQueue {
        let c = self.student[0].len();
        let flat: Vec<f64> = self.queue_rows.iter().flatten().copied().collect();
        let rows = Array2::from_shape_vec((self.queue_rows.len(), c), flat).unwrap();
        LogitQueue::from_ordered(self.capacity, &rows, &self.queue_labels).unwrap()
    }
}
