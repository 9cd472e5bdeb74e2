//! Config files merged with command-line overrides.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use mcld_models::DatasetSpec;
use mcld_train::DistillRunConfig;
use toml::{Table, Value};

use crate::error::{CliError, Result};

/// Default output root when `--out` is not given.
pub const OUT_ROOT_ENV: &str = "MCLD_OUT_ROOT";

#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// Run seed (model initialisation and shuffling).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["mcld", "kd", "none", "ce"])]
    pub method: Option<String>,
    /// Contrastive temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub queue_capacity: Option<usize>,
    #[arg(long, value_parser = ["exclude", "paper_literal_multiply"])]
    pub mask_mode: Option<String>,
    #[arg(long)]
    pub warmup_end_epoch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Contrastive terms to enable: a comma list of instance, sample,
    /// category, or `all` / `none`.
    #[arg(long)]
    pub ablation_flags: Option<String>,
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn section<'a>(table: &'a mut Table, key: &str) -> Result<&'a mut Table> {
    table
        .entry(key)
        .or_insert_with(|| Value::Table(Table::new()))
        .as_table_mut()
        .ok_or_else(|| CliError::Config(format!("`{key}` must be a table")))
}

fn int(v: impl TryInto<i64>) -> Result<Value> {
    v.try_into().map(Value::Integer).map_err(|_| CliError::Usage("integer flag out of range".into()))
}

pub fn parse_ablation_flags(text: &str) -> Result<Table> {
    let mut t = Table::new();
    let all = matches!(text.trim(), "all");
    for k in ["instance", "sample", "category"] {
        t.insert(k.into(), Value::Boolean(all));
    }
    if all || text.trim() == "none" {
        return Ok(t);
    }
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let key = match item {
            "instance" | "inst" => "instance",
            "sample" | "samp" => "sample",
            "category" | "cate" => "category",
            other => return Err(CliError::Usage(format!("unknown ablation flag `{other}`"))),
        };
        t.insert(key.into(), Value::Boolean(true));
    }
    Ok(t)
}

impl RunFlags {
    /// Writes every set flag into the matching key of a run config table.
    pub fn apply(&self, table: &mut Table) -> Result<()> {
        if let Some(seed) = self.seed {
            table.insert("seed".into(), int(seed)?);
        }
        if let Some(m) = &self.method {
            let m = if m == "ce" { "none" } else { m.as_str() };
            table.insert("method".into(), Value::String(m.into()));
        }
        if let Some(e) = self.epochs {
            table.insert("epochs".into(), int(e)?);
        }
        let loss = section(table, "loss")?;
        if let Some(tau) = self.tau {
            loss.insert("tau".into(), Value::Float(tau));
        }
        if let Some(k) = self.queue_capacity {
            loss.insert("queue_capacity".into(), int(k)?);
        }
        if let Some(m) = &self.mask_mode {
            loss.insert("mask_mode".into(), Value::String(m.clone()));
        }
        if let Some(w) = self.warmup_end_epoch {
            loss.insert("warmup_end_epoch".into(), int(w)?);
        }
        if let Some(b) = self.batch_size {
            section(table, "dataset")?.insert("batch_size".into(), int(b)?);
        }
        if let Some(flags) = &self.ablation_flags {
            table.insert("ablation".into(), Value::Table(parse_ablation_flags(flags)?));
        }
        Ok(())
    }
}

/// Loads a run config, applies `flags` and sets the output directory.
pub fn run_config(path: &Path, flags: &RunFlags, out: Option<&Path>) -> Result<DistillRunConfig> {
    let mut table = read_table(path)?;
    flags.apply(&mut table)?;
    if let Some(out) = out {
        let s = out.to_str().ok_or_else(|| CliError::Usage(format!("output path {} is not UTF-8", out.display())))?;
        table.insert("output_dir".into(), Value::String(s.into()));
    }
    let text = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(DistillRunConfig::from_toml_str(&text)?)
}

/// The `[dataset]` section of a config file, or the whole file when it has
/// no such section.
pub fn dataset_spec(path: &Path, batch_size: Option<usize>) -> Result<DatasetSpec> {
    let mut table = read_table(path)?;
    let mut ds = match table.remove("dataset") {
        Some(Value::Table(t)) => t,
        Some(_) => return Err(CliError::Config("`dataset` must be a table".into())),
        None => table,
    };
    if let Some(b) = batch_size {
        ds.insert("batch_size".into(), int(b)?);
    }
    let spec: DatasetSpec = Value::Table(ds)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(format!("{}: {e}", path.display())))?;
    spec.validate()?;
    Ok(spec)
}

/// `--out`, else the config's own output directory, else
/// `$MCLD_OUT_ROOT/<command>` (root defaults to `runs`).
pub fn output_dir(flag: Option<&Path>, configured: Option<&Path>, command: &str) -> PathBuf {
    if let Some(p) = flag.or(configured) {
        return p.to_path_buf();
    }
    let root = std::env::var_os(OUT_ROOT_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
    root.join(command)
}

/// The output directory named in a run config file, if any.
pub fn configured_output(path: &Path) -> Result<Option<PathBuf>> {
    let table = read_table(path)?;
    Ok(table.get("output_dir").and_then(Value::as_str).map(PathBuf::from))
}

/// Writes `<out>/<command>.config.toml` recording what a command ran with.
pub fn persist(out: &Path, command: &str, record: &impl serde::Serialize) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| CliError::write(out, e))?;
    let text = toml::to_string(record).map_err(|e| CliError::Output(e.to_string()))?;
    let path = out.join(format!("{command}.config.toml"));
    fs::write(&path, text).map_err(|e| CliError::write(&path, e))
}
