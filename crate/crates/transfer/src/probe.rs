//! Multinomial logistic regression on frozen features.

use log::warn;
use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TransferError};
use crate::table::FeatureTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Stop after this many full-batch steps without a lower validation loss.
    pub patience: usize,
    /// Share of the training rows held out for early stopping.
    pub validation_fraction: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { lr: 0.5, momentum: 0.9, weight_decay: 1e-4, max_epochs: 500, patience: 30, validation_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub top1: f64,
    pub train_top1: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub missing_classes: Vec<usize>,
}

struct Standardizer {
    mean: Array1<f64>,
    std: Array1<f64>,
}

impl Standardizer {
    fn fit(x: &Array2<f64>) -> Self {
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| s.max(1e-6));
        Self { mean, std }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean) / &self.std
    }
}

fn softmax_ce(logits: &Array2<f64>, labels: &[usize]) -> (f64, Array2<f64>) {
    let mut probs = logits.clone();
    let mut loss = 0.0;
    for (mut row, &y) in probs.rows_mut().into_iter().zip(labels) {
        let m = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row /= s;
        loss -= row[y].max(1e-300).ln();
    }
    (loss / labels.len().max(1) as f64, probs)
}

fn accuracy(logits: &Array2<f64>, labels: &[usize]) -> f64 {
    let hits = logits
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| {
            let s = row[y];
            row.iter().enumerate().all(|(j, &v)| v < s || (v == s && j >= y))
        })
        .count();
    100.0 * hits as f64 / labels.len().max(1) as f64
}

fn rows_of(x: &Array2<f64>, labels: &[usize], idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
    (x.select(Axis(0), idx), idx.iter().map(|&i| labels[i]).collect())
}

/// Trains a linear classifier on `train` and reports test top-1 (percent).
///
/// Features are standardized with statistics of the fitting rows. Weights
/// start at zero and follow full-batch gradient descent with momentum; the
/// weights with the lowest validation loss are kept.
pub fn linear_probe(
    train: &FeatureTable,
    test: &FeatureTable,
    num_classes: usize,
    seed: u64,
    config: &ProbeConfig,
) -> Result<ProbeResult> {
    if train.rows() == 0 {
        return Err(TransferError::Empty("train"));
    }
    if test.rows() == 0 {
        return Err(TransferError::Empty("test"));
    }
    if train.dim() != test.dim() {
        return Err(TransferError::Dimension(format!(
            "train features have {} columns, test features {}",
            train.dim(),
            test.dim()
        )));
    }
    if let Some(&y) = train.labels.iter().chain(&test.labels).find(|&&y| y >= num_classes) {
        return Err(TransferError::Dimension(format!("label {y} out of range for {num_classes} classes")));
    }
    let mut present = vec![false; num_classes];
    for &y in &train.labels {
        present[y] = true;
    }
    let missing_classes: Vec<usize> = (0..num_classes).filter(|&k| !present[k]).collect();
    if !missing_classes.is_empty() {
        warn!("classes {missing_classes:?} have no training rows; the probe cannot predict them well");
    }

    let x_all = train.features.mapv(f64::from);
    let mut order: Vec<usize> = (0..train.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = if train.rows() >= 10 {
        ((train.rows() as f64 * config.validation_fraction).round() as usize).min(train.rows() - 1)
    } else {
        0
    };
    let (val_idx, fit_idx) = order.split_at(n_val);
    let mut fit_idx = fit_idx.to_vec();
    fit_idx.sort_unstable();
    let mut val_idx = val_idx.to_vec();
    val_idx.sort_unstable();
    let (x_fit, y_fit) = rows_of(&x_all, &train.labels, &fit_idx);
    let (x_val, y_val) = rows_of(&x_all, &train.labels, &val_idx);
    let scaler = Standardizer::fit(&x_fit);
    let x_fit = scaler.apply(&x_fit);
    let x_val = scaler.apply(&x_val);
    let x_test = scaler.apply(&test.features.mapv(f64::from));

    let d = train.dim();
    let n = x_fit.nrows() as f64;
    let mut w = Array2::<f64>::zeros((d, num_classes));
    let mut b = Array1::<f64>::zeros(num_classes);
    let mut vw = w.clone();
    let mut vb = b.clone();
    let mut best = (f64::INFINITY, w.clone(), b.clone(), 0usize);
    let mut epochs_run = 0;
    for epoch in 1..=config.max_epochs {
        epochs_run = epoch;
        let logits = x_fit.dot(&w) + &b;
        let (_, mut g) = softmax_ce(&logits, &y_fit);
        for (mut row, &y) in g.rows_mut().into_iter().zip(&y_fit) {
            row[y] -= 1.0;
        }
        g /= n;
        let gw = x_fit.t().dot(&g) + &(&w * config.weight_decay);
        let gb = g.sum_axis(Axis(0));
        vw = &vw * config.momentum + &gw;
        vb = &vb * config.momentum + &gb;
        w.scaled_add(-config.lr, &vw);
        b.scaled_add(-config.lr, &vb);

        if n_val == 0 {
            best = (0.0, w.clone(), b.clone(), epoch);
            continue;
        }
        let (val_loss, _) = softmax_ce(&(x_val.dot(&w) + &b), &y_val);
        if val_loss < best.0 {
            best = (val_loss, w.clone(), b.clone(), epoch);
        } else if epoch - best.3 >= config.patience {
            break;
        }
    }
    let (_, w, b, best_epoch) = best;
    Ok(ProbeResult {
        top1: accuracy(&(x_test.dot(&w) + &b), &test.labels),
        train_top1: accuracy(&(x_fit.dot(&w) + &b), &y_fit),
        epochs_run,
        best_epoch,
        missing_classes,
    })
}
