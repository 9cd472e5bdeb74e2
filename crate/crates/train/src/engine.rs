//! Training loops and evaluation.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use mcld_core::ce::cross_entropy_grad;
use mcld_core::kd::kd_loss_grad;
use mcld_core::{mcld_loss_grad, LogitBatch, LogitQueue};
use mcld_models::{build_model, load_dataset, Dataset, DatasetSpec, ModelSpec, Network, Split};
use ndarray::{Array2, ArrayView2};

use crate::checkpoint::{Checkpoint, QueueState};
use crate::config::{DistillRunConfig, Method};
use crate::error::{Result, TrainError};
use crate::metrics::{read_metrics, MetricRecord, MetricsWriter, METRICS_JSONL};
use crate::optim::Sgd;

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const EFFECTIVE_CONFIG: &str = "config.toml";

/// Accuracy (in percent) and mean cross-entropy over a split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accuracy {
    pub top1: f64,
    pub top5: f64,
    pub loss_ce: f64,
    pub count: usize,
}

/// Position of the true class when classes are sorted by descending score,
/// ties broken towards the lower class index.
fn rank_of_label(row: &[f64], label: usize) -> usize {
    let s = row[label];
    row.iter().enumerate().filter(|&(j, &v)| v > s || (v == s && j < label)).count()
}

/// Top-1 and top-`min(5, C)` accuracy of `logits` against `labels`.
pub fn accuracy_from_logits(logits: ArrayView2<'_, f64>, labels: &[usize]) -> Result<Accuracy> {
    if labels.is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let batch = LogitBatch::new(logits.to_owned(), labels.to_vec())?;
    let k = 5.min(batch.num_classes());
    let (mut hit1, mut hit5) = (0usize, 0usize);
    for (i, &y) in labels.iter().enumerate() {
        let row: Vec<f64> = batch.row(i).to_vec();
        let r = rank_of_label(&row, y);
        hit1 += (r == 0) as usize;
        hit5 += (r < k) as usize;
    }
    let n = labels.len() as f64;
    Ok(Accuracy {
        top1: 100.0 * hit1 as f64 / n,
        top5: 100.0 * hit5 as f64 / n,
        loss_ce: mcld_core::ce::cross_entropy(&batch)?,
        count: labels.len(),
    })
}

/// Logits, penultimate features and labels of a whole split, in stored order.
pub struct SplitOutputs {
    pub logits: Array2<f64>,
    pub features: Array2<f32>,
    pub labels: Vec<usize>,
}

pub fn predict_split(model: &mut Network, data: &Dataset, split: Split) -> SplitOutputs {
    let n = data.split(split).len();
    let c = model.spec().num_classes;
    let f = model.spec().feature_dim();
    let mut logits = Array2::zeros((n, c));
    let mut features = Array2::zeros((n, f));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for batch in data.eval_batches(split) {
        let out = model.forward(&batch.images, false);
        let b = batch.len();
        logits.slice_mut(ndarray::s![row..row + b, ..]).assign(&out.logits.mapv(f64::from));
        features.slice_mut(ndarray::s![row..row + b, ..]).assign(&out.features);
        labels.extend(batch.labels);
        row += b;
    }
    SplitOutputs { logits, features, labels }
}

pub fn evaluate(model: &mut Network, data: &Dataset, split: Split) -> Result<Accuracy> {
    if data.split(split).is_empty() {
        return Err(TrainError::EmptySplit);
    }
    let out = predict_split(model, data, split);
    accuracy_from_logits(out.logits.view(), &out.labels)
}

/// Rebuilds the network stored in a checkpoint.
pub fn load_model(path: &Path) -> Result<(Network, Checkpoint)> {
    let ck = Checkpoint::load(path)?;
    let mut net = build_model(&ck.model, 0)?;
    net.load_state(&ck.weights).map_err(|e| TrainError::Incompatible(format!("{}: {e}", path.display())))?;
    Ok((net, ck))
}

pub fn evaluate_checkpoint(path: &Path, spec: &DatasetSpec, split: Split) -> Result<Accuracy> {
    let (mut net, ck) = load_model(path)?;
    check_model_fits(&ck.model, spec)?;
    let data = load_dataset(spec)?;
    evaluate(&mut net, &data, split)
}

fn check_model_fits(model: &ModelSpec, spec: &DatasetSpec) -> Result<()> {
    if model.num_classes != spec.num_classes || model.in_channels != spec.image_shape[0] {
        return Err(TrainError::Incompatible(format!(
            "model with {} classes and {} channels cannot run on {} classes of {:?}",
            model.num_classes, model.in_channels, spec.num_classes, spec.image_shape
        )));
    }
    Ok(())
}

/// Result of a training run. `model` is the network after the last epoch.
pub struct RunOutcome {
    pub model: Network,
    pub final_test: Accuracy,
    pub best_top1: f64,
    pub history: Vec<MetricRecord>,
    pub last_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
    pub queue_fill: usize,
    /// Teacher checksum before and after the run.
    pub teacher_checksums: Option<(String, String)>,
}

impl RunOutcome {
    pub fn test_history(&self) -> impl Iterator<Item = &MetricRecord> {
        self.history.iter().filter(|r| r.split == "test")
    }
}

/// Supervised cross-entropy training of `config.teacher.model`.
pub fn train_teacher(config: &DistillRunConfig) -> Result<RunOutcome> {
    let data = load_dataset(&config.dataset)?;
    train_teacher_on(config, &data)
}

pub fn train_teacher_on(config: &DistillRunConfig, data: &Dataset) -> Result<RunOutcome> {
    if config.method != Method::None {
        return Err(TrainError::Config(format!("teacher training needs method = \"none\", got \"{}\"", config.method)));
    }
    config.validate()?;
    let model = build_model(&config.teacher.model, config.seed)?;
    run(config, data, model, None)
}

/// Trains `config.student` with the configured method, loading the teacher
/// from `config.teacher.checkpoint` when the method needs one.
pub fn distill(config: &DistillRunConfig) -> Result<RunOutcome> {
    let data = load_dataset(&config.dataset)?;
    let teacher = match config.method {
        Method::None => None,
        _ => Some(load_teacher(config)?),
    };
    distill_with(config, &data, teacher, None)
}

pub fn load_teacher(config: &DistillRunConfig) -> Result<Network> {
    let path = config
        .teacher
        .checkpoint
        .as_ref()
        .ok_or_else(|| TrainError::Config("teacher.checkpoint is required for distillation".into()))?;
    let (net, ck) = load_model(path)?;
    if ck.model != config.teacher.model {
        return Err(TrainError::Incompatible(format!(
            "{} holds {:?}, configuration expects {:?}",
            path.display(),
            ck.model,
            config.teacher.model
        )));
    }
    Ok(net)
}

/// [`distill`] on an already loaded dataset. `student` overrides the freshly
/// initialised student network.
pub fn distill_with(
    config: &DistillRunConfig,
    data: &Dataset,
    teacher: Option<Network>,
    student: Option<Network>,
) -> Result<RunOutcome> {
    config.validate()?;
    let student = match student {
        Some(s) => {
            if s.spec() != &config.student {
                return Err(TrainError::Incompatible("student network does not match config".into()));
            }
            s
        }
        None => build_model(&config.student, config.seed)?,
    };
    let teacher = match (config.method, teacher) {
        (Method::None, _) => None,
        (_, None) => return Err(TrainError::Config(format!("method {} needs a teacher", config.method))),
        (_, Some(mut t)) => {
            if t.spec() != &config.teacher.model {
                return Err(TrainError::Incompatible("teacher network does not match config".into()));
            }
            t.freeze();
            Some(t)
        }
    };
    run(config, data, student, teacher)
}

struct Sums {
    n: f64,
    inst: f64,
    samp: f64,
    cate: f64,
    kd: f64,
    ce: f64,
    total: f64,
    hit1: f64,
    hit5: f64,
    seconds: f64,
    steps: usize,
}

fn to_batch(logits: &Array2<f32>, labels: &[usize], epoch: usize, step: usize) -> Result<LogitBatch> {
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::Diverged { epoch, step });
    }
    Ok(LogitBatch::new(logits.mapv(f64::from), labels.to_vec())?)
}

fn run(cfg: &DistillRunConfig, data: &Dataset, mut model: Network, mut teacher: Option<Network>) -> Result<RunOutcome> {
    check_model_fits(model.spec(), &cfg.dataset)?;
    if data.num_classes != model.spec().num_classes {
        return Err(TrainError::Incompatible("dataset and model class counts differ".into()));
    }
    let out_dir = cfg.output_dir.clone();
    let method = cfg.method;
    let method_name = method.to_string();
    let fingerprint = cfg.fingerprint();
    let teacher_before = teacher.as_ref().map(|t| t.checksum());
    let mut opt = Sgd::new(cfg.optimizer.momentum, cfg.optimizer.weight_decay);
    let mut queue = match method {
        Method::Mcld => Some(LogitQueue::new(cfg.loss.queue_capacity, data.num_classes)?),
        _ => None,
    };
    let mut start_epoch = 1;
    let mut best_top1 = f64::NEG_INFINITY;
    let mut history = Vec::new();
    let mut writer = None;

    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        let cfg_path = dir.join(EFFECTIVE_CONFIG);
        fs::write(&cfg_path, cfg.to_toml_string()).map_err(|e| TrainError::io(&cfg_path, e))?;
        let last = dir.join(LAST_CHECKPOINT);
        if cfg.resume && last.exists() {
            let ck = Checkpoint::load(&last)?;
            if ck.fingerprint != fingerprint {
                return Err(TrainError::Incompatible(format!(
                    "{} was written by a different configuration",
                    last.display()
                )));
            }
            model.load_state(&ck.weights).map_err(|e| TrainError::Incompatible(e.to_string()))?;
            opt.load_state(&model.trainable_params(), &ck.momentum)?;
            if let Some(q) = &ck.queue {
                queue = Some(q.restore()?);
            }
            start_epoch = ck.epoch + 1;
            best_top1 = ck.best_top1;
            let metrics_path = dir.join(METRICS_JSONL);
            if metrics_path.exists() {
                history = read_metrics(&metrics_path)?.into_iter().filter(|r| r.epoch <= ck.epoch).collect();
            }
            info!("resuming {} from epoch {}", dir.display(), ck.epoch);
        }
        writer = Some(MetricsWriter::with_records(dir, &history)?);
    }

    let (kd_weight, ce_weight) = match method {
        Method::None => (0.0, 1.0),
        Method::Kd => (cfg.kd.weight, cfg.kd.ce_weight),
        Method::Mcld => (0.0, if cfg.loss.include_task_ce { cfg.loss.task_ce_weight } else { 0.0 }),
    };
    let last_epoch = cfg.stop_after_epoch.map_or(cfg.epochs, |s| s.min(cfg.epochs));
    let mut final_test = None;

    for epoch in start_epoch..=last_epoch {
        let lr = cfg.optimizer.lr_at(epoch);
        let omega = match method {
            Method::Mcld => mcld_core::warmup_weight(epoch, &cfg.loss),
            _ => 0.0,
        };
        let mut s = Sums {
            n: 0.0,
            inst: 0.0,
            samp: 0.0,
            cate: 0.0,
            kd: 0.0,
            ce: 0.0,
            total: 0.0,
            hit1: 0.0,
            hit5: 0.0,
            seconds: 0.0,
            steps: 0,
        };
        for (step, batch) in data.train_batches(cfg.seed, epoch).enumerate() {
            let t0 = Instant::now();
            let out = model.forward(&batch.images, true);
            let student = to_batch(&out.logits, &batch.labels, epoch, step)?;
            let ce = cross_entropy_grad(&student)?;
            let mut grad = ce.grad * ce_weight;
            let (mut inst, mut samp, mut cate, mut kd) = (0.0, 0.0, 0.0, 0.0);
            let mut teacher_batch = None;
            if let Some(t) = teacher.as_mut() {
                let t_out = t.forward(&batch.images, false);
                let tb = to_batch(&t_out.logits, &batch.labels, epoch, step)?;
                match method {
                    Method::Kd => {
                        let l = kd_loss_grad(&student, &tb, cfg.kd.tau)?;
                        kd = l.value;
                        grad.scaled_add(kd_weight, &l.grad);
                    }
                    Method::Mcld => {
                        let q = queue.as_ref().expect("mcld keeps a queue");
                        let (terms, g) = mcld_loss_grad(&student, &tb, q, epoch, &cfg.loss, cfg.ablation)?;
                        inst = terms.instance;
                        samp = terms.sample;
                        cate = terms.category;
                        grad += &g;
                    }
                    Method::None => {}
                }
                teacher_batch = Some(tb);
            }
            let total = inst + samp + omega * cate + kd_weight * kd + ce_weight * ce.value;
            if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::Diverged { epoch, step });
            }
            model.zero_grad();
            model.backward(&grad.mapv(|g| g as f32))?;
            opt.step(model.trainable_params_mut(), lr);
            if let (Some(q), Some(tb)) = (queue.as_mut(), teacher_batch.as_ref()) {
                q.enqueue(tb)?;
            }
            s.seconds += t0.elapsed().as_secs_f64();
            s.steps += 1;

            let b = batch.len() as f64;
            let acc = accuracy_from_logits(student.values().view(), &batch.labels)?;
            s.n += b;
            s.inst += b * inst;
            s.samp += b * samp;
            s.cate += b * cate;
            s.kd += b * kd;
            s.ce += b * ce.value;
            s.total += b * total;
            s.hit1 += b * acc.top1;
            s.hit5 += b * acc.top5;
        }

        let queue_fill = queue.as_ref().map_or(0, |q| q.len());
        let mut train = MetricRecord::empty(epoch, "train", &method_name);
        train.loss_inst = s.inst / s.n;
        train.loss_samp = s.samp / s.n;
        train.loss_cate = s.cate / s.n;
        train.loss_kd = s.kd / s.n;
        train.loss_ce = s.ce / s.n;
        train.loss_total = s.total / s.n;
        train.kd_weight = kd_weight;
        train.ce_weight = ce_weight;
        train.omega = omega;
        train.top1 = s.hit1 / s.n;
        train.top5 = s.hit5 / s.n;
        train.lr = lr;
        train.queue_fill = queue_fill;
        train.wall_seconds_per_batch = s.seconds / s.steps.max(1) as f64;

        let acc = evaluate(&mut model, data, Split::Test)?;
        let mut test = MetricRecord::empty(epoch, "test", &method_name);
        test.loss_ce = acc.loss_ce;
        test.loss_total = acc.loss_ce;
        test.ce_weight = 1.0;
        test.omega = omega;
        test.top1 = acc.top1;
        test.top5 = acc.top5;
        test.lr = lr;
        test.queue_fill = queue_fill;
        test.wall_seconds_per_batch = train.wall_seconds_per_batch;
        info!(
            "[{method_name}] epoch {epoch}: loss {:.4} train top1 {:.2} test top1 {:.2}",
            train.loss_total, train.top1, acc.top1
        );

        let improved = acc.top1 > best_top1;
        if improved {
            best_top1 = acc.top1;
        }
        if let Some(dir) = &out_dir {
            let ck = Checkpoint {
                fingerprint,
                model: model.spec().clone(),
                epoch,
                test_top1: acc.top1,
                best_top1,
                weights: model.state(),
                momentum: opt.state(),
                queue: queue.as_ref().map(QueueState::capture),
            };
            ck.save(&dir.join(LAST_CHECKPOINT))?;
            if improved {
                ck.save(&dir.join(BEST_CHECKPOINT))?;
            }
        }
        if let Some(w) = writer.as_mut() {
            w.append(&train)?;
            w.append(&test)?;
            w.flush()?;
        }
        history.push(train);
        history.push(test);
        final_test = Some(acc);
    }

    let final_test = match final_test {
        Some(a) => a,
        None => evaluate(&mut model, data, Split::Test)?,
    };
    let teacher_checksums = match (teacher_before, teacher.as_ref()) {
        (Some(before), Some(t)) => Some((before, t.checksum())),
        _ => None,
    };
    Ok(RunOutcome {
        model,
        final_test,
        best_top1,
        history,
        last_checkpoint: out_dir.as_ref().map(|d| d.join(LAST_CHECKPOINT)),
        best_checkpoint: out_dir.as_ref().map(|d| d.join(BEST_CHECKPOINT)),
        queue_fill: queue.as_ref().map_or(0, |q| q.len()),
        teacher_checksums,
    })
}
