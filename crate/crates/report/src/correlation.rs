//! Class-correlation matrices of logits and their teacher–student difference.

use std::path::Path;

use ndarray::Array2;

use crate::error::{ReportError, Result};
use crate::render::emit_figure;
use crate::sidecar::Sidecar;

/// Pearson correlation between the columns of a logit matrix. `defined` is
/// false for every pair involving a constant column.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub values: Array2<f64>,
    pub defined: Array2<bool>,
}

pub fn pearson_columns(x: &Array2<f64>) -> CorrelationMatrix {
    let (n, c) = x.dim();
    let mut centered = x.clone();
    let mut norms = vec![0.0; c];
    for k in 0..c {
        let mut col = centered.column_mut(k);
        let mean = col.iter().sum::<f64>() / n.max(1) as f64;
        col.mapv_inplace(|v| v - mean);
        norms[k] = col.iter().map(|v| v * v).sum::<f64>().sqrt();
    }
    let mut values = Array2::zeros((c, c));
    let mut defined = Array2::from_elem((c, c), false);
    for a in 0..c {
        for b in a..c {
            if norms[a] == 0.0 || norms[b] == 0.0 {
                continue;
            }
            let r = if a == b {
                1.0
            } else {
                let dot: f64 = centered.column(a).iter().zip(centered.column(b)).map(|(u, v)| u * v).sum();
                (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0)
            };
            values[[a, b]] = r;
            values[[b, a]] = r;
            defined[[a, b]] = true;
            defined[[b, a]] = true;
        }
    }
    CorrelationMatrix { values, defined }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationDiff {
    pub student: CorrelationMatrix,
    pub teacher: CorrelationMatrix,
    /// `|student - teacher|`; zero where `masked`.
    pub diff: Array2<f64>,
    /// Cells where either correlation is undefined.
    pub masked: Array2<bool>,
}

/// Rows sorted by the bit patterns of the student then the teacher row, so
/// the sums below do not depend on the order samples arrive in.
fn canonical_order(student: &Array2<f64>, teacher: &Array2<f64>) -> Vec<usize> {
    let key = |i: usize| -> Vec<u64> { student.row(i).iter().chain(teacher.row(i)).map(|v| v.to_bits()).collect() };
    let mut idx: Vec<usize> = (0..student.nrows()).collect();
    idx.sort_by_cached_key(|&i| key(i));
    idx
}

/// Compares the class-correlation structure of two logit sets over the same
/// samples (row `i` of both is the same sample).
pub fn correlation_diff(student: &Array2<f64>, teacher: &Array2<f64>) -> Result<CorrelationDiff> {
    if student.dim() != teacher.dim() {
        return Err(ReportError::Dimension(format!(
            "student logits {:?} and teacher logits {:?} differ",
            student.dim(),
            teacher.dim()
        )));
    }
    if student.nrows() < 2 || student.ncols() < 2 {
        return Err(ReportError::Degenerate("need at least 2 samples and 2 classes".into()));
    }
    if student.iter().chain(teacher.iter()).any(|v| !v.is_finite()) {
        return Err(ReportError::Degenerate("non-finite logits".into()));
    }
    let order = canonical_order(student, teacher);
    let s = pearson_columns(&student.select(ndarray::Axis(0), &order));
    let t = pearson_columns(&teacher.select(ndarray::Axis(0), &order));
    let masked = ndarray::Zip::from(&s.defined).and(&t.defined).map_collect(|&a, &b| !(a && b));
    let mut diff = (&s.values - &t.values).mapv(f64::abs);
    diff.zip_mut_with(&masked, |d, &m| {
        if m {
            *d = 0.0;
        }
    });
    Ok(CorrelationDiff { student: s, teacher: t, diff, masked })
}

impl CorrelationDiff {
    /// Heatmap sidecar: one row per cell, masked cells with an empty value.
    /// Colours run from white at 0 to dark blue at the largest difference.
    pub fn sidecar(&self) -> Sidecar {
        let c = self.diff.nrows();
        let vmax = self.diff.iter().cloned().fold(0.0, f64::max);
        let mut s = Sidecar::new(&["row", "col", "value"]);
        s.set("kind", "heatmap");
        s.set("figure", "correlation_diff");
        s.set("rows", c);
        s.set("cols", c);
        s.set("cell_px", (480 / c).clamp(4, 48));
        s.set("vmin", 0.0f64);
        s.set("vmax", if vmax > 0.0 { vmax } else { 1.0 });
        for i in 0..c {
            for j in 0..c {
                let v = if self.masked[[i, j]] { String::new() } else { self.diff[[i, j]].to_string() };
                s.push_row(vec![i.to_string(), j.to_string(), v]);
            }
        }
        s
    }

    pub fn plot(&self, png_path: &Path) -> Result<()> {
        emit_figure(&self.sidecar(), png_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_columns_are_masked() {
        let x = array![[1.0, 5.0, 2.0], [2.0, 5.0, 4.0], [3.0, 5.0, 7.0]];
        let m = pearson_columns(&x);
        assert!(!m.defined[[1, 1]] && !m.defined[[0, 1]]);
        assert!(m.defined[[0, 2]]);
        assert_eq!(m.values[[0, 0]], 1.0);
        let d = correlation_diff(&x, &x).unwrap();
        assert!(d.masked[[1, 0]]);
        assert!(d.diff.iter().all(|&v| v == 0.0));
        assert_eq!(d.sidecar().rows[1][2], "");
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let a = Array2::<f64>::zeros((3, 2));
        let b = Array2::<f64>::zeros((4, 2));
        assert!(matches!(correlation_diff(&a, &b), Err(ReportError::Dimension(_))));
    }
}
