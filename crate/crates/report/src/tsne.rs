//! Exact t-SNE (van der Maaten & Hinton, 2008) with gains and momentum.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{ReportError, Result};
use crate::render::emit_figure;
use crate::sidecar::Sidecar;

#[derive(Debug, Clone, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
        }
    }
}

fn squared_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Row-conditional affinities with the bandwidth of each row found by
/// bisection on the entropy, then symmetrized and normalized.
fn joint_probabilities(d: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = d.nrows();
    let target = perplexity.ln();
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        let (mut lo, mut hi, mut beta) = (0.0f64, f64::INFINITY, 1.0f64);
        // distances relative to the nearest neighbour keep exp() in range
        let dmin = (0..n).filter(|&j| j != i).map(|j| d[[i, j]]).fold(f64::INFINITY, f64::min);
        let mut row = vec![0.0; n];
        for _ in 0..100 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if j == i {
                    row[j] = 0.0;
                    continue;
                }
                let dj = d[[i, j]] - dmin;
                row[j] = (-beta * dj).exp();
                sum += row[j];
                weighted += dj * row[j];
            }
            let entropy = sum.ln() + beta * weighted / sum;
            for v in row.iter_mut() {
                *v /= sum;
            }
            let diff = entropy - target;
            if diff.abs() < 1e-5 {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        for j in 0..n {
            p[[i, j]] = row[j];
        }
    }
    let sym = &p + &p.t();
    let total = sym.sum();
    sym.mapv(|v| (v / total).max(1e-12))
}

/// Embeds the rows of `x` in two dimensions.
pub fn tsne(x: &Array2<f64>, seed: u64, config: &TsneConfig) -> Result<Array2<f64>> {
    let n = x.nrows();
    if n < 10 {
        return Err(ReportError::Degenerate(format!("t-SNE needs at least 10 points, got {n}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(ReportError::Degenerate("non-finite feature values".into()));
    }
    let d = squared_distances(x);
    let scale = d.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(ReportError::Degenerate("all points are identical".into()));
    }
    let d = d / scale;
    let perplexity = config.perplexity.min((n as f64 - 1.0) / 3.0).max(1.0);
    let p = joint_probabilities(&d, perplexity);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y = Array2::from_shape_fn((n, 2), |_| normal.sample(&mut rng));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut num = Array2::<f64>::zeros((n, n));
    for iter in 0..config.iterations {
        let exaggeration = if iter < config.exaggeration_iterations { config.early_exaggeration } else { 1.0 };
        let momentum = if iter < 250 { 0.5 } else { 0.8 };
        let mut qsum = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                let dx = y[[i, 0]] - y[[j, 0]];
                let dy = y[[i, 1]] - y[[j, 1]];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[[i, j]] = v;
                num[[j, i]] = v;
                qsum += 2.0 * v;
            }
        }
        let mut grad = Array2::<f64>::zeros((n, 2));
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[[i, j]] / qsum).max(1e-12);
                let m = (exaggeration * p[[i, j]] - q) * num[[i, j]];
                g0 += m * (y[[i, 0]] - y[[j, 0]]);
                g1 += m * (y[[i, 1]] - y[[j, 1]]);
            }
            grad[[i, 0]] = 4.0 * g0;
            grad[[i, 1]] = 4.0 * g1;
        }
        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            *gain = gain.max(0.01);
            *u = momentum * *u - config.learning_rate * *gain * g;
        }
        y += &update;
        let mean: Array1<f64> = y.mean_axis(ndarray::Axis(0)).expect("nonempty");
        y -= &mean;
    }
    Ok(y)
}

/// Embeds `features`, writes a scatter sidecar (`x,y,group,label`) and the
/// PNG rendered from it. Returns the coordinates.
pub fn tsne_plot(
    features: &Array2<f64>,
    labels: &[usize],
    seed: u64,
    config: &TsneConfig,
    png_path: &Path,
) -> Result<Array2<f64>> {
    if features.nrows() != labels.len() {
        return Err(ReportError::Dimension(format!("{} feature rows but {} labels", features.nrows(), labels.len())));
    }
    let mut classes = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(ReportError::Degenerate("t-SNE plots need at least 2 classes".into()));
    }
    let y = tsne(features, seed, config)?;
    let mut s = Sidecar::new(&["x", "y", "group", "label"]);
    let (xmin, xmax) = min_max(y.column(0).iter().copied());
    let (ymin, ymax) = min_max(y.column(1).iter().copied());
    let (px, py) = ((xmax - xmin) * 0.05, (ymax - ymin) * 0.05);
    for (k, v) in [
        ("kind", "scatter"),
        ("figure", "tsne"),
        ("width", "640"),
        ("height", "640"),
        ("margin", "16"),
        ("radius", "3"),
    ] {
        s.set(k, v);
    }
    s.set("seed", seed);
    s.set("xmin", xmin - px);
    s.set("xmax", xmax + px);
    s.set("ymin", ymin - py);
    s.set("ymax", ymax + py);
    for (row, &label) in y.rows().into_iter().zip(labels) {
        s.push_row(vec![row[0].to_string(), row[1].to_string(), label.to_string(), label.to_string()]);
    }
    emit_figure(&s, png_path)?;
    Ok(y)
}

pub(crate) fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}
