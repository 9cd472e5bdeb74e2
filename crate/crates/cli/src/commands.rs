use std::fs;
use std::path::{Path, PathBuf};

use mcld_models::data::synth::synthesize_dataset;
use mcld_models::{load_dataset, DataSource, DatasetSpec, Split};
use mcld_report::{correlation_diff, timing_accuracy_scatter, tsne_plot, TsneConfig};
use mcld_train::{
    distill, evaluate_checkpoint, load_model, predict_split, run_ablation_grid, train_teacher, AblationAxes, Method,
    MetricRecord, MetricsWriter,
};
use mcld_transfer::{extract_to_dir, linear_probe, FeatureManifest, ProbeConfig};
use ndarray::Array2;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::settings::{self, RunFlags};
use crate::{Command, Common};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData { common, seed } => synth_data(&common, seed),
        Command::TrainTeacher { common, flags, resume } => teacher(&common, &flags, resume),
        Command::Distill { common, flags, teacher, resume } => student(&common, &flags, teacher, resume),
        Command::Eval { common, checkpoint, split, batch_size } => eval(&common, &checkpoint, &split, batch_size),
        Command::Ablate { common, flags, axes, teacher } => ablate(&common, &flags, &axes, teacher),
        Command::Probe { common, checkpoint, seed, label, batch_size } => {
            probe(&common, &checkpoint, seed, label, batch_size)
        }
        Command::PlotTsne { common, checkpoint, features, split, max_points, seed, perplexity } => {
            plot_tsne(&common, checkpoint, features, &split, max_points, seed, perplexity)
        }
        Command::PlotCorr { common, student, teacher, split } => plot_corr(&common, &student, &teacher, &split),
        Command::PlotTiming { common, runs } => plot_timing(&common, &runs),
    }
}

fn need_config<'a>(common: &'a Common, command: &str) -> Result<&'a Path> {
    common.config.as_deref().ok_or_else(|| CliError::Usage(format!("{command} needs --config")))
}

fn split_of(name: &str) -> Split {
    if name == "train" {
        Split::Train
    } else {
        Split::Test
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::write(path, e))
}

#[derive(Serialize)]
struct SynthRecord<'a> {
    command: &'a str,
    dataset: &'a DatasetSpec,
}

fn synth_data(common: &Common, seed: Option<u64>) -> Result<()> {
    let mut spec = match &common.config {
        Some(path) => settings::dataset_spec(path, None)?,
        None => DatasetSpec::default(),
    };
    if spec.source != DataSource::Synthetic {
        return Err(CliError::Config(format!("synth-data needs source = \"synthetic\", got {}", spec.source)));
    }
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    let out = settings::output_dir(common.out.as_deref(), None, "synth-data");
    let manifest = synthesize_dataset(spec.num_classes, spec.image_shape, spec.seed, &spec.synthetic, &out)?;
    settings::persist(&out, "synth-data", &SynthRecord { command: "synth-data", dataset: &spec })?;
    println!("wrote {} train and {} test images to {}", manifest.train.records, manifest.test.records, out.display());
    Ok(())
}

fn run_config_for(common: &Common, flags: &RunFlags, command: &str) -> Result<mcld_train::DistillRunConfig> {
    let path = need_config(common, command)?;
    let configured = settings::configured_output(path)?;
    let out = settings::output_dir(common.out.as_deref(), configured.as_deref(), command);
    settings::run_config(path, flags, Some(&out))
}

fn teacher(common: &Common, flags: &RunFlags, resume: bool) -> Result<()> {
    if flags.method.as_deref().is_some_and(|m| m != "none" && m != "ce") {
        return Err(CliError::Usage("train-teacher trains with --method none".into()));
    }
    let flags = RunFlags { method: Some("none".into()), ..flags.clone() };
    let mut cfg = run_config_for(common, &flags, "train-teacher")?;
    cfg.resume |= resume;
    let outcome = train_teacher(&cfg)?;
    println!("teacher top-1 {:.2} (best {:.2})", outcome.final_test.top1, outcome.best_top1);
    if let Some(best) = &outcome.best_checkpoint {
        println!("best checkpoint {}", best.display());
    }
    Ok(())
}

fn student(common: &Common, flags: &RunFlags, teacher: Option<PathBuf>, resume: bool) -> Result<()> {
    let mut cfg = run_config_for(common, flags, "distill")?;
    cfg.resume |= resume;
    if teacher.is_some() {
        cfg.teacher.checkpoint = teacher;
    }
    if cfg.method != Method::None && cfg.teacher.checkpoint.is_none() {
        return Err(CliError::Config(format!("method {} needs teacher.checkpoint or --teacher", cfg.method)));
    }
    let outcome = distill(&cfg)?;
    println!(
        "{} student top-1 {:.2} top-5 {:.2} (best {:.2}); queue fill {}",
        cfg.method, outcome.final_test.top1, outcome.final_test.top5, outcome.best_top1, outcome.queue_fill
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalRecord<'a> {
    command: &'a str,
    checkpoint: &'a Path,
    split: &'a str,
    dataset: &'a DatasetSpec,
}

#[derive(Serialize)]
struct EvalResult<'a> {
    checkpoint: &'a Path,
    split: &'a str,
    top1: f64,
    top5: f64,
    loss_ce: f64,
    count: usize,
}

fn eval(common: &Common, checkpoint: &Path, split: &str, batch_size: Option<usize>) -> Result<()> {
    let spec = settings::dataset_spec(need_config(common, "eval")?, batch_size)?;
    let out = settings::output_dir(common.out.as_deref(), None, "eval");
    let acc = evaluate_checkpoint(checkpoint, &spec, split_of(split))?;
    settings::persist(&out, "eval", &EvalRecord { command: "eval", checkpoint, split, dataset: &spec })?;
    write_json(
        &out.join("eval.json"),
        &EvalResult { checkpoint, split, top1: acc.top1, top5: acc.top5, loss_ce: acc.loss_ce, count: acc.count },
    )?;
    println!("{split} top-1 {:.2} top-5 {:.2} over {} images", acc.top1, acc.top5, acc.count);
    Ok(())
}

fn ablate(common: &Common, flags: &RunFlags, axes: &str, teacher: Option<PathBuf>) -> Result<()> {
    if flags.method.as_deref().is_some_and(|m| m != "mcld") {
        return Err(CliError::Usage("ablation grids run --method mcld".into()));
    }
    let flags = RunFlags { method: Some("mcld".into()), ..flags.clone() };
    let axes = AblationAxes::parse(axes)?;
    let mut cfg = run_config_for(common, &flags, "ablate")?;
    if teacher.is_some() {
        cfg.teacher.checkpoint = teacher;
    }
    let out = cfg.output_dir.clone().expect("output directory set");
    fs::create_dir_all(&out).map_err(|e| CliError::write(&out, e))?;
    let path = out.join("config.toml");
    fs::write(&path, cfg.to_toml_string()).map_err(|e| CliError::write(&path, e))?;
    let table = run_ablation_grid(&cfg, &axes)?;
    println!("{:<16} {:>8} {:>8} {:>8}", "setting", "top1", "top5", "delta");
    for r in &table.rows {
        println!("{:<16} {:>8.2} {:>8.2} {:>+8.2}", r.label, r.top1, r.top5, r.delta_top1);
    }
    Ok(())
}

#[derive(Serialize)]
struct ProbeRecord<'a> {
    command: &'a str,
    checkpoint: &'a Path,
    seed: u64,
    dataset: &'a DatasetSpec,
    probe: &'a ProbeConfig,
}

#[derive(Serialize)]
struct ProbeSummary<'a> {
    checkpoint: &'a Path,
    top1: f64,
    train_top1: f64,
    epochs_run: usize,
    best_epoch: usize,
    missing_classes: &'a [usize],
}

fn probe(
    common: &Common,
    checkpoint: &Path,
    seed: u64,
    label: Option<String>,
    batch_size: Option<usize>,
) -> Result<()> {
    let spec = settings::dataset_spec(need_config(common, "probe")?, batch_size)?;
    let out = settings::output_dir(common.out.as_deref(), None, "probe");
    let config = ProbeConfig::default();
    settings::persist(
        &out,
        "probe",
        &ProbeRecord { command: "probe", checkpoint, seed, dataset: &spec, probe: &config },
    )?;
    let (train, test) = extract_to_dir(checkpoint, &spec, &out.join("features"))?;
    let result = linear_probe(&train, &test, spec.num_classes, seed, &config)?;
    write_json(
        &out.join("probe.json"),
        &ProbeSummary {
            checkpoint,
            top1: result.top1,
            train_top1: result.train_top1,
            epochs_run: result.epochs_run,
            best_epoch: result.best_epoch,
            missing_classes: &result.missing_classes,
        },
    )?;
    let method = label.unwrap_or_else(|| {
        checkpoint
            .parent()
            .and_then(Path::file_name)
            .map_or_else(|| "probe".into(), |n| n.to_string_lossy().into_owned())
    });
    let mut record = MetricRecord::empty(result.epochs_run, "probe", &method);
    record.top1 = result.top1;
    let mut writer = MetricsWriter::append_to(&out)?;
    writer.append(&record)?;
    writer.flush()?;
    println!("probe top-1 {:.2} (train {:.2})", result.top1, result.train_top1);
    Ok(())
}

/// At most `max` row indices, taking classes in turn so every class is
/// represented.
fn balanced_rows(labels: &[usize], max: usize) -> Vec<usize> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut out = Vec::new();
    let mut depth = 0;
    while out.len() < max.min(labels.len()) {
        for rows in &by_class {
            if let Some(&i) = rows.get(depth) {
                if out.len() < max {
                    out.push(i);
                }
            }
        }
        depth += 1;
    }
    out.sort_unstable();
    out
}

#[derive(Serialize)]
struct TsneRecord<'a> {
    command: &'a str,
    source: String,
    split: &'a str,
    max_points: usize,
    seed: u64,
    perplexity: f64,
}

fn plot_tsne(
    common: &Common,
    checkpoint: Option<PathBuf>,
    features: Option<PathBuf>,
    split: &str,
    max_points: usize,
    seed: u64,
    perplexity: f64,
) -> Result<()> {
    let out = settings::output_dir(common.out.as_deref(), None, "plot-tsne");
    let (table, source) = match (checkpoint, features) {
        (Some(ckpt), None) => {
            let spec = settings::dataset_spec(need_config(common, "plot-tsne --checkpoint")?, None)?;
            let (mut model, _) = load_model(&ckpt)?;
            let data = load_dataset(&spec)?;
            let t = mcld_transfer::extract_features(&mut model, &data, split_of(split))?;
            (t, ckpt.display().to_string())
        }
        (None, Some(dir)) => {
            let manifest = FeatureManifest::read(&dir)?;
            (manifest.load_split(&dir, split)?, dir.display().to_string())
        }
        _ => return Err(CliError::Usage("plot-tsne needs --checkpoint or --features".into())),
    };
    let rows = balanced_rows(&table.labels, max_points);
    let x = Array2::from_shape_fn((rows.len(), table.dim()), |(i, j)| f64::from(table.features[[rows[i], j]]));
    let labels: Vec<usize> = rows.iter().map(|&i| table.labels[i]).collect();
    let config = TsneConfig { perplexity, ..TsneConfig::default() };
    settings::persist(
        &out,
        "plot-tsne",
        &TsneRecord { command: "plot-tsne", source, split, max_points, seed, perplexity },
    )?;
    let png = out.join("tsne.png");
    tsne_plot(&x, &labels, seed, &config, &png)?;
    println!("wrote {} ({} points)", png.display(), labels.len());
    Ok(())
}

#[derive(Serialize)]
struct CorrRecord<'a> {
    command: &'a str,
    student: &'a Path,
    teacher: &'a Path,
    split: &'a str,
    dataset: &'a DatasetSpec,
}

fn split_logits(checkpoint: &Path, data: &mcld_models::Dataset, split: Split) -> Result<Array2<f64>> {
    let (mut model, _) = load_model(checkpoint)?;
    Ok(predict_split(&mut model, data, split).logits)
}

fn plot_corr(common: &Common, student: &Path, teacher: &Path, split: &str) -> Result<()> {
    let spec = settings::dataset_spec(need_config(common, "plot-corr")?, None)?;
    let out = settings::output_dir(common.out.as_deref(), None, "plot-corr");
    settings::persist(
        &out,
        "plot-corr",
        &CorrRecord { command: "plot-corr", student, teacher, split, dataset: &spec },
    )?;
    let data = load_dataset(&spec)?;
    let s = split_logits(student, &data, split_of(split))?;
    let t = split_logits(teacher, &data, split_of(split))?;
    let diff = correlation_diff(&s, &t)?;
    let png = out.join("corr_diff.png");
    diff.plot(&png)?;
    let max = diff.diff.iter().copied().fold(0.0f64, f64::max);
    println!("wrote {} (max |difference| {max:.4})", png.display());
    Ok(())
}

#[derive(Serialize)]
struct TimingRecord<'a> {
    command: &'a str,
    metrics: &'a [PathBuf],
}

fn plot_timing(common: &Common, runs: &[PathBuf]) -> Result<()> {
    let out = settings::output_dir(common.out.as_deref(), None, "plot-timing");
    let files: Vec<PathBuf> =
        runs.iter().map(|p| if p.is_dir() { p.join("metrics.jsonl") } else { p.clone() }).collect();
    settings::persist(&out, "plot-timing", &TimingRecord { command: "plot-timing", metrics: &files })?;
    let png = out.join("timing.png");
    let rows = timing_accuracy_scatter(&files, &png)?;
    for r in &rows {
        println!("{:<24} {:>10.5} s/batch {:>8.2}", r.run, r.seconds_per_batch, r.top1);
    }
    println!("wrote {}", png.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_rows_alternate_classes() {
        let labels = [0, 0, 0, 0, 1, 1, 2];
        assert_eq!(balanced_rows(&labels, 3), vec![0, 4, 6]);
        assert_eq!(balanced_rows(&labels, 5), vec![0, 1, 4, 5, 6]);
        assert_eq!(balanced_rows(&labels, 100).len(), 7);
    }
}
