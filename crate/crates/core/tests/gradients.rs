mod support;

use mcld_core::category::category_wise_loss_grad;
use mcld_core::ce::cross_entropy_grad;
use mcld_core::instance::instance_wise_loss_grad;
use mcld_core::kd::kd_loss_grad;
use mcld_core::sample::sample_wise_loss_grad;
use mcld_core::{mcld_loss_grad, Components, LogitBatch, LossConfig, LossWithGrad, MaskMode};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn central_difference(batch: &LogitBatch, f: &dyn Fn(&LogitBatch) -> f64) -> Array2<f64> {
    let mut out = Array2::zeros(batch.values().dim());
    for ((i, j), g) in out.indexed_iter_mut() {
        let mut plus = batch.values().clone();
        plus[[i, j]] += STEP;
        let mut minus = batch.values().clone();
        minus[[i, j]] -= STEP;
        let fp = f(&LogitBatch::new(plus, batch.labels().to_vec()).unwrap());
        let fm = f(&LogitBatch::new(minus, batch.labels().to_vec()).unwrap());
        *g = (fp - fm) / (2.0 * STEP);
    }
    out
}

fn rel_norm_err(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff = (a - b).mapv(|x| x * x).sum().sqrt();
    let scale = a.mapv(|x| x * x).sum().sqrt().max(b.mapv(|x| x * x).sum().sqrt());
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

fn random_batch(rng: &mut ChaCha8Rng, labels: &[usize]) -> LogitBatch {
    let v = Array2::from_shape_fn((4, 6), |_| rng.random_range(-2.0..2.0));
    LogitBatch::new(v, labels.to_vec()).unwrap()
}

fn check(name: &str, analytic: LossWithGrad, s: &LogitBatch, f: &dyn Fn(&LogitBatch) -> f64) {
    assert!((analytic.value - f(s)).abs() < 1e-12, "{name}: value mismatch");
    let numeric = central_difference(s, f);
    let err = rel_norm_err(&analytic.grad, &numeric);
    assert!(err <= TOL, "{name}: relative gradient error {err:e}");
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for round in 0..50 {
        let labels: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
        let s = random_batch(&mut rng, &labels);
        let t = random_batch(&mut rng, &labels);
        let mut queue = mcld_core::LogitQueue::new(6, 6).unwrap();
        let qlabels: Vec<usize> = (0..4).map(|_| rng.random_range(0..6)).collect();
        queue.enqueue(&random_batch(&mut rng, &qlabels)).unwrap();
        queue.enqueue(&random_batch(&mut rng, &labels)).unwrap();

        let normalize = round % 2 == 1;
        let mode = if round % 4 >= 2 { MaskMode::PaperLiteralMultiply } else { MaskMode::Exclude };
        let cfg = LossConfig {
            tau: 0.5,
            normalize_logits: normalize,
            mask_mode: mode,
            warmup_end_epoch: 4,
            ..Default::default()
        };

        check("instance", instance_wise_loss_grad(&s, &t, &queue, &cfg).unwrap(), &s, &|x| {
            instance_wise_loss_grad(x, &t, &queue, &cfg).unwrap().value
        });
        check("sample", sample_wise_loss_grad(&s, &t, &cfg).unwrap(), &s, &|x| {
            sample_wise_loss_grad(x, &t, &cfg).unwrap().value
        });
        check("category", category_wise_loss_grad(&s, &t, &cfg).unwrap(), &s, &|x| {
            category_wise_loss_grad(x, &t, &cfg).unwrap().value
        });
        check("kd", kd_loss_grad(&s, &t, 4.0).unwrap(), &s, &|x| kd_loss_grad(x, &t, 4.0).unwrap().value);
        check("ce", cross_entropy_grad(&s).unwrap(), &s, &|x| cross_entropy_grad(x).unwrap().value);
        let (terms, grad) = mcld_loss_grad(&s, &t, &queue, 2, &cfg, Components::ALL).unwrap();
        check("mcld", LossWithGrad { value: terms.total, grad }, &s, &|x| {
            mcld_loss_grad(x, &t, &queue, 2, &cfg, Components::ALL).unwrap().0.total
        });
    }
}
