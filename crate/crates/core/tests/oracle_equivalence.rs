mod support;

use mcld_core::category::category_wise_loss;
use mcld_core::instance::{compute_instance_scores, instance_wise_loss};
use mcld_core::kd::kd_loss;
use mcld_core::sample::sample_wise_loss;
use mcld_core::{LossConfig, MaskMode};
use support::oracle::{self, rel_err};
use support::random::Instance;

const SEEDS: u64 = 1500;
const TOL: f64 = 1e-10;

#[test]
fn losses_match_scalar_oracle_on_small_instances() {
    let mut worst = [0.0f64; 4];
    for seed in 0..SEEDS {
        let inst = Instance::random(seed, 5, 4, 6, 2.0);
        let s = inst.student_batch();
        let t = inst.teacher_batch();
        let q = inst.queue();
        for tau in [0.07, 0.5, 2.0] {
            for normalize in [false, true] {
                for mode in [MaskMode::Exclude, MaskMode::PaperLiteralMultiply] {
                    let cfg = LossConfig { tau, mask_mode: mode, normalize_logits: normalize, ..Default::default() };
                    let got = instance_wise_loss(&compute_instance_scores(&s, &t, &q, &cfg).unwrap(), &cfg).unwrap();
                    let want = oracle::instance_loss(
                        &inst.student,
                        &inst.teacher,
                        &inst.labels,
                        &inst.queue_rows,
                        &inst.queue_labels,
                        tau,
                        mode == MaskMode::PaperLiteralMultiply,
                        normalize,
                    );
                    worst[0] = worst[0].max(rel_err(got, want));
                }
                let cfg = LossConfig { tau, normalize_logits: normalize, ..Default::default() };
                let got = sample_wise_loss(&s, &t, &cfg).unwrap();
                let want = oracle::sample_loss(&inst.student, &inst.teacher, tau, normalize);
                worst[1] = worst[1].max(rel_err(got, want));

                let got = category_wise_loss(&s, &t, &cfg).unwrap();
                let want = oracle::category_loss(&inst.student, &inst.teacher, &inst.labels, tau, normalize);
                worst[2] = worst[2].max(rel_err(got, want));
            }
            let kd_tau = tau * 4.0;
            let got = kd_loss(&s, &t, kd_tau).unwrap();
            let want = oracle::kd_loss(&inst.student, &inst.teacher, kd_tau);
            worst[3] = worst[3].max(rel_err(got, want));
        }
    }
    for (name, w) in ["instance", "sample", "category", "kd"].iter().zip(worst) {
        assert!(w <= TOL, "{name}: worst relative error {w:e}");
    }
}

#[test]
fn nonnegativity_under_exclude() {
    for seed in 0..500 {
        let inst = Instance::random(10_000 + seed, 5, 4, 6, 3.0);
        let (s, t, q) = (inst.student_batch(), inst.teacher_batch(), inst.queue());
        let cfg = LossConfig { tau: 0.1, ..Default::default() };
        assert!(instance_wise_loss(&compute_instance_scores(&s, &t, &q, &cfg).unwrap(), &cfg).unwrap() >= 0.0);
        assert!(sample_wise_loss(&s, &t, &cfg).unwrap() >= 0.0);
        assert!(category_wise_loss(&s, &t, &cfg).unwrap().is_finite());
        assert!(kd_loss(&s, &t, 4.0).unwrap() >= 0.0);
    }
}
