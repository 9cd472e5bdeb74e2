//! Row-wise helpers shared by the loss implementations.

use ndarray::{Array1, Array2, ArrayView2, Axis};

const NORM_FLOOR: f64 = 1e-12;

/// Logit rows as the dot products see them: either untouched or scaled to unit
/// L2 norm. Keeps the norms needed to backpropagate through the scaling.
pub(crate) struct PreparedRows {
    pub rows: Array2<f64>,
    norms: Option<Array1<f64>>,
}

impl PreparedRows {
    pub fn new(values: ArrayView2<'_, f64>, normalize: bool) -> Self {
        if !normalize {
            return Self { rows: values.to_owned(), norms: None };
        }
        let norms: Array1<f64> = values.rows().into_iter().map(|r| r.dot(&r).sqrt().max(NORM_FLOOR)).collect();
        let mut rows = values.to_owned();
        for (mut r, &n) in rows.axis_iter_mut(Axis(0)).zip(norms.iter()) {
            r /= n;
        }
        Self { rows, norms: Some(norms) }
    }

    /// Maps a gradient with respect to the prepared rows back to the raw
    /// values: `g_z = (g_u - u (u·g_u)) / |z|` when rows were normalized.
    pub fn backprop(&self, mut grad: Array2<f64>) -> Array2<f64> {
        let Some(norms) = &self.norms else {
            return grad;
        };
        for ((mut g, u), &n) in grad.axis_iter_mut(Axis(0)).zip(self.rows.axis_iter(Axis(0))).zip(norms.iter()) {
            let proj = u.dot(&g);
            g.scaled_add(-proj, &u);
            g /= n;
        }
        grad
    }
}

/// `log Σ exp(x)` with max subtraction. Returns `-inf` for an empty slice.
///
/// The largest element is pulled out of the sum and the remainder goes through
/// `ln_1p`, so `log_sum_exp(x) - max(x)` keeps full relative precision even
/// when every other term is negligible.
pub(crate) fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    log_sum_exp_minus(xs, 0.0)
}

/// `log Σ exp(x) - reference`, grouped as `(max - reference) + ln_1p(rest)`
/// so a result near zero is not lost to cancellation.
pub(crate) fn log_sum_exp_minus(xs: impl Iterator<Item = f64> + Clone, reference: f64) -> f64 {
    let (arg, max) = xs.clone().enumerate().fold(
        (usize::MAX, f64::NEG_INFINITY),
        |acc, (i, x)| {
            if x > acc.1 {
                (i, x)
            } else {
                acc
            }
        },
    );
    if max == f64::NEG_INFINITY {
        return max;
    }
    let rest: f64 = xs.enumerate().filter(|&(i, _)| i != arg).map(|(_, x)| (x - max).exp()).sum();
    (max - reference) + rest.ln_1p()
}

/// Row-wise softmax of a matrix, numerically stable.
pub(crate) fn softmax_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut r in m.axis_iter_mut(Axis(0)) {
        let max = r.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        r.mapv_inplace(|x| (x - max).exp());
        let s = r.sum();
        r /= s;
    }
    m
}
