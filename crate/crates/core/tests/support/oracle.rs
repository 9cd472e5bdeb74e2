//! Scalar-loop reference implementations of every loss, written directly from
//! the formulas with nested `Vec`s and no shared code with the library.
#![allow(dead_code)]

use std::collections::VecDeque;

pub type Mat = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

pub fn maybe_normalize(rows: &Mat, normalize: bool) -> Mat {
    if !normalize {
        return rows.clone();
    }
    rows.iter()
        .map(|r| {
            let n = dot(r, r).sqrt().max(1e-12);
            r.iter().map(|x| x / n).collect()
        })
        .collect()
}

/// Per anchor: `-log(e^{s_i} / (e^{s_i} + Σ_j e^{γ_j s_j}))` rewritten as
/// `ln(1 + Σ_j e^{s_j - s_i})`; in exclude mode masked `j` are skipped, in
/// literal mode they enter as `e^{0 - s_i}`.
#[allow(clippy::too_many_arguments)]
pub fn instance_loss(
    s: &Mat,
    t: &Mat,
    labels: &[usize],
    queue: &Mat,
    queue_labels: &[usize],
    tau: f64,
    literal: bool,
    normalize: bool,
) -> f64 {
    let s = maybe_normalize(s, normalize);
    let t = maybe_normalize(t, normalize);
    let q = maybe_normalize(queue, normalize);
    let mut total = 0.0;
    for i in 0..s.len() {
        let pos = dot(&s[i], &t[i]) / tau;
        let mut acc = 0.0;
        for j in 0..q.len() {
            let gamma = if labels[i] != queue_labels[j] { 1.0 } else { 0.0 };
            if gamma == 0.0 && !literal {
                continue;
            }
            let sj = gamma * dot(&s[i], &q[j]) / tau;
            acc += (sj - pos).exp();
        }
        total += acc.ln_1p();
    }
    total / s.len() as f64
}

pub fn sample_loss(s: &Mat, t: &Mat, tau: f64, normalize: bool) -> f64 {
    let s = maybe_normalize(s, normalize);
    let t = maybe_normalize(t, normalize);
    let b = s.len();
    let mut total = 0.0;
    for i in 0..b {
        let diag = dot(&s[i], &t[i]) / tau;
        let mut acc = 0.0;
        for j in 0..b {
            if j != i {
                acc += (dot(&s[i], &t[j]) / tau - diag).exp();
            }
        }
        total += acc.ln_1p();
    }
    total / b as f64
}

/// `-(1/P) Σ_p log(e^{ψ_p} / Σ_n e^{ψ_n})` evaluated pair by pair as
/// `(1/P) Σ_p ln Σ_n e^{ψ_n - ψ_p}`.
pub fn category_loss(s: &Mat, t: &Mat, labels: &[usize], tau: f64, normalize: bool) -> f64 {
    let s = maybe_normalize(s, normalize);
    let t = maybe_normalize(t, normalize);
    let b = s.len();
    let mut total = 0.0;
    let mut counted = 0;
    for i in 0..b {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for j in 0..b {
            let psi = dot(&s[i], &t[j]) / tau;
            if labels[j] == labels[i] && j != i {
                pos.push(psi);
            } else if labels[j] != labels[i] {
                neg.push(psi);
            }
        }
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let mut anchor = 0.0;
        for &p in &pos {
            let mut denom = 0.0;
            for &n in &neg {
                denom += (n - p).exp();
            }
            anchor += denom.ln();
        }
        total += anchor / pos.len() as f64;
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

pub fn softmax(z: &[f64], tau: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = z.iter().map(|x| ((x - m) / tau).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.iter().map(|x| x / sum).collect()
}

pub fn kd_loss(s: &Mat, t: &Mat, tau: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..s.len() {
        let ps = softmax(&s[i], tau);
        let pt = softmax(&t[i], tau);
        let mut kl = 0.0;
        for j in 0..ps.len() {
            kl += pt[j] * (pt[j] / ps[j]).ln();
        }
        total += tau * tau * kl;
    }
    total / s.len() as f64
}

/// List-based FIFO used to check the ring-buffer queue.
#[derive(Debug, Clone)]
pub struct RefQueue {
    pub capacity: usize,
    pub items: VecDeque<(Vec<f64>, usize)>,
}

impl RefQueue {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::new() }
    }

    pub fn push(&mut self, row: Vec<f64>, label: usize) {
        self.items.push_back((row, label));
        if self.items.len() > self.capacity {
            self.items.pop_front();
        }
    }

    pub fn rows(&self) -> Mat {
        self.items.iter().map(|(r, _)| r.clone()).collect()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|(_, l)| *l).collect()
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
