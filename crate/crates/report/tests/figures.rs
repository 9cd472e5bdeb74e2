use std::fs;
use std::path::Path;

use mcld_report::{
    correlation_diff, pearson_columns, render_file, sidecar_path_for, timing_accuracy_scatter, timing_row, tsne,
    tsne_plot, ReportError, Sidecar, TsneConfig,
};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn blobs(per: usize, classes: usize, dim: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let n = per * classes;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let x = Array2::from_shape_fn((n, dim), |(i, j)| {
        let centre = if j == labels[i] { 6.0 } else { 0.0 };
        centre + noise.sample(&mut rng)
    });
    (x, labels)
}

fn leave_one_out_1nn(y: &Array2<f64>, labels: &[usize]) -> f64 {
    let n = y.nrows();
    let mut hits = 0;
    for i in 0..n {
        let mut best = (f64::INFINITY, 0);
        for j in (0..n).filter(|&j| j != i) {
            let d = (y[[i, 0]] - y[[j, 0]]).powi(2) + (y[[i, 1]] - y[[j, 1]]).powi(2);
            if d < best.0 {
                best = (d, labels[j]);
            }
        }
        hits += usize::from(best.1 == labels[i]);
    }
    hits as f64 / n as f64
}

#[test]
fn tsne_keeps_separated_blobs_apart() {
    let (x, labels) = blobs(20, 3, 10, 4);
    let cfg = TsneConfig { perplexity: 10.0, iterations: 400, ..TsneConfig::default() };
    let y = tsne(&x, 0, &cfg).unwrap();
    assert_eq!(y.dim(), (60, 2));
    assert!(leave_one_out_1nn(&y, &labels) >= 0.95);
}

#[test]
fn tsne_is_reproducible_per_seed() {
    let (x, _) = blobs(6, 3, 5, 9);
    let cfg = TsneConfig { perplexity: 4.0, iterations: 200, ..TsneConfig::default() };
    let a = tsne(&x, 3, &cfg).unwrap();
    assert_eq!(a, tsne(&x, 3, &cfg).unwrap());
    assert_ne!(a, tsne(&x, 4, &cfg).unwrap());
}

/// Textbook Pearson coefficient between two columns.
fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[test]
fn three_class_correlations_match_textbook_formula() {
    let s = array![[2.0, 0.5, -1.0], [0.1, 1.9, 0.3], [-0.7, 0.2, 2.2], [1.4, 1.1, -0.2], [0.0, -0.5, 0.8]];
    let t = array![[3.0, 0.1, -2.0], [0.2, 2.5, 0.1], [-1.0, 0.0, 3.1], [1.0, 0.9, 0.5], [0.3, -0.2, 0.1]];
    let d = correlation_diff(&s, &t).unwrap();
    let col = |m: &Array2<f64>, k: usize| m.column(k).to_vec();
    for a in 0..3 {
        for b in 0..3 {
            let rs = pearson(&col(&s, a), &col(&s, b));
            let rt = pearson(&col(&t, a), &col(&t, b));
            assert!((d.student.values[[a, b]] - rs).abs() < 1e-12);
            assert!((d.teacher.values[[a, b]] - rt).abs() < 1e-12);
            assert!((d.diff[[a, b]] - (rs - rt).abs()).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_columns_are_masked() {
    let s = array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]];
    let t = array![[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]];
    let m = pearson_columns(&s);
    assert!(!m.defined[[0, 1]] && !m.defined[[1, 1]] && m.defined[[0, 0]]);
    let d = correlation_diff(&s, &t).unwrap();
    assert!(d.masked[[1, 0]]);
    assert_eq!(d.diff[[1, 0]], 0.0);
}

#[test]
fn correlation_inputs_are_validated() {
    let a = Array2::<f64>::zeros((4, 3));
    assert!(matches!(correlation_diff(&a, &Array2::zeros((4, 2))), Err(ReportError::Dimension(_))));
    assert!(matches!(
        correlation_diff(&Array2::zeros((1, 3)), &Array2::zeros((1, 3))),
        Err(ReportError::Degenerate(_))
    ));
    let mut nan = a.clone();
    nan[[0, 0]] = f64::NAN;
    assert!(correlation_diff(&nan, &a).is_err());
}

fn random_logits(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, c), |_| rng.random_range(-3.0..3.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn diff_is_symmetric_with_zero_diagonal(seed in any::<u64>(), n in 3usize..30, c in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_logits(&mut rng, n, c);
        let t = random_logits(&mut rng, n, c);
        let d = correlation_diff(&s, &t).unwrap();
        for a in 0..c {
            prop_assert_eq!(d.diff[[a, a]], 0.0);
            for b in 0..c {
                prop_assert_eq!(d.diff[[a, b]], d.diff[[b, a]]);
                prop_assert!(d.diff[[a, b]] <= 2.0);
            }
        }
        prop_assert!(correlation_diff(&s, &s).unwrap().diff.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sample_order_is_irrelevant(seed in any::<u64>(), n in 3usize..30, c in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_logits(&mut rng, n, c);
        let t = random_logits(&mut rng, n, c);
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let sp = s.select(ndarray::Axis(0), &order);
        let tp = t.select(ndarray::Axis(0), &order);
        prop_assert_eq!(correlation_diff(&s, &t).unwrap(), correlation_diff(&sp, &tp).unwrap());
    }

    #[test]
    fn sidecars_round_trip(values in prop::collection::vec(-1e6f64..1e6, 0..20)) {
        let mut s = Sidecar::new(&["x", "y"]);
        s.set("kind", "scatter");
        s.set("note", "a=b");
        for v in &values {
            s.push_row(vec![v.to_string(), (-v).to_string()]);
        }
        let back = Sidecar::parse(&s.to_text()).unwrap();
        prop_assert_eq!(back.to_text(), s.to_text());
    }
}

fn assert_regenerates(png: &Path) {
    let bytes = fs::read(png).unwrap();
    assert_eq!(&bytes[1..4], b"PNG");
    assert_eq!(render_file(&sidecar_path_for(png)).unwrap(), bytes, "{}", png.display());
}

fn write_metrics(dir: &Path, method: &str, seconds: f64, top1: f64) -> std::path::PathBuf {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("metrics.jsonl");
    let lines = [
        format!(r#"{{"epoch":1,"split":"train","method":"{method}","wall_seconds_per_batch":{seconds},"top1":50.0}}"#),
        format!(r#"{{"epoch":1,"split":"test","method":"{method}","wall_seconds_per_batch":0.0,"top1":{top1}}}"#),
    ];
    fs::write(&path, lines.join("\n")).unwrap();
    path
}

#[test]
fn every_figure_regenerates_from_its_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (x, labels) = blobs(8, 3, 6, 1);
    let cfg = TsneConfig { perplexity: 5.0, iterations: 150, ..TsneConfig::default() };
    let tsne_png = dir.path().join("figs/tsne.png");
    tsne_plot(&x, &labels, 2, &cfg, &tsne_png).unwrap();
    assert_regenerates(&tsne_png);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_logits(&mut rng, 40, 5);
    let t = random_logits(&mut rng, 40, 5);
    let corr_png = dir.path().join("figs/corr.png");
    correlation_diff(&s, &t).unwrap().plot(&corr_png).unwrap();
    assert_regenerates(&corr_png);
    let side = Sidecar::read(&sidecar_path_for(&corr_png)).unwrap();
    assert_eq!(side.get("vmin").unwrap(), "0");
    assert!(side.get_f64("vmax").unwrap() > 0.0);

    let files = vec![
        write_metrics(&dir.path().join("ce"), "none", 0.01, 70.0),
        write_metrics(&dir.path().join("kd"), "kd", 0.02, 75.0),
        write_metrics(&dir.path().join("mcld"), "mcld", 0.03, 77.0),
    ];
    let timing_png = dir.path().join("figs/timing.png");
    let rows = timing_accuracy_scatter(&files, &timing_png).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1].run, "kd");
    assert_eq!(rows[2].top1, 77.0);
    assert_regenerates(&timing_png);
}

#[test]
fn runs_without_timing_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("metrics.jsonl");
    fs::write(&path, r#"{"epoch":1,"split":"test","method":"kd","top1":60.0}"#).unwrap();
    assert!(matches!(timing_row(&path), Err(ReportError::MissingTiming(_))));
}
