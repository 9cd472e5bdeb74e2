//! Grids of MCLD runs over module switches and warm-up horizons.

use std::fs;
use std::path::Path;

use mcld_core::Components;
use mcld_models::{load_dataset, Dataset};
use serde::{Deserialize, Serialize};

use crate::config::{DistillRunConfig, Method};
use crate::engine::{distill_with, load_teacher};
use crate::error::{Result, TrainError};

pub const ABLATION_CSV: &str = "ablation.csv";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AblationAxes {
    pub instance: bool,
    pub sample: bool,
    pub category: bool,
    /// Warm-up end epochs to sweep; empty keeps the base value.
    pub warmup_end_epochs: Vec<usize>,
}

impl AblationAxes {
    pub const MODULES: Self = Self { instance: true, sample: true, category: true, warmup_end_epochs: Vec::new() };

    /// Parses a comma-separated list such as `instance,sample,category` or
    /// `warmup_end_epoch=1:155`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut axes = Self::default();
        for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            match item.split_once('=') {
                None => match item {
                    "instance" | "inst" => axes.instance = true,
                    "sample" | "samp" => axes.sample = true,
                    "category" | "cate" => axes.category = true,
                    other => return Err(TrainError::Config(format!("unknown ablation axis `{other}`"))),
                },
                Some(("warmup_end_epoch", values)) => {
                    for v in values.split(':') {
                        let e: usize =
                            v.trim().parse().map_err(|_| TrainError::Config(format!("bad warm-up epoch `{v}`")))?;
                        if e == 0 {
                            return Err(TrainError::Config("warm-up end epoch must be positive".into()));
                        }
                        axes.warmup_end_epochs.push(e);
                    }
                }
                Some((other, _)) => return Err(TrainError::Config(format!("unknown ablation axis `{other}`"))),
            }
        }
        Ok(axes)
    }

    /// Every combination in table order: module subsets by size, then in
    /// instance/sample/category order; warm-up values vary fastest.
    pub fn settings(&self, base: &DistillRunConfig) -> Vec<(Components, usize)> {
        let free: Vec<usize> = [self.instance, self.sample, self.category]
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(i, _)| i)
            .collect();
        let mut masks: Vec<u32> = (0..1u32 << free.len()).collect();
        masks.sort_by_key(|&m| {
            let bits: Vec<bool> = (0..free.len()).map(|b| m & (1 << b) == 0).collect();
            (m.count_ones(), bits)
        });
        let warmups = if self.warmup_end_epochs.is_empty() {
            vec![base.loss.warmup_end_epoch]
        } else {
            self.warmup_end_epochs.clone()
        };
        let mut out = Vec::new();
        for m in masks {
            let mut c = base.ablation;
            for (b, &axis) in free.iter().enumerate() {
                let on = m & (1 << b) != 0;
                match axis {
                    0 => c.instance = on,
                    1 => c.sample = on,
                    _ => c.category = on,
                }
            }
            for &w in &warmups {
                out.push((c, w));
            }
        }
        out
    }
}

pub fn components_label(c: Components) -> String {
    let mut s = String::new();
    for (on, ch) in [(c.instance, 'I'), (c.sample, 'S'), (c.category, 'C')] {
        if on {
            s.push(ch);
        }
    }
    if s.is_empty() {
        s.push_str("none");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub label: String,
    pub instance: bool,
    pub sample: bool,
    pub category: bool,
    pub warmup_end_epoch: usize,
    pub top1: f64,
    pub top5: f64,
    pub best_top1: f64,
    /// `top1` minus the first row's `top1`.
    pub delta_top1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| TrainError::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize().collect::<std::result::Result<Vec<AblationRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// One MCLD run per setting of `axes`, all with the base seed. The first row
/// (all free modules off) is the baseline for `delta_top1`. Each run writes
/// into `<output_dir>/<label>` when the base config has an output directory.
pub fn run_ablation_grid(base: &DistillRunConfig, axes: &AblationAxes) -> Result<AblationTable> {
    let data = load_dataset(&base.dataset)?;
    run_ablation_grid_on(base, axes, &data)
}

pub fn run_ablation_grid_on(base: &DistillRunConfig, axes: &AblationAxes, data: &Dataset) -> Result<AblationTable> {
    if base.method != Method::Mcld {
        return Err(TrainError::Config("ablation grids run method = \"mcld\"".into()));
    }
    let settings = axes.settings(base);
    let multi_warmup = axes.warmup_end_epochs.len() > 1;
    let mut rows: Vec<AblationRow> = Vec::with_capacity(settings.len());
    for (components, warmup) in settings {
        let mut cfg = base.clone();
        cfg.ablation = components;
        cfg.loss.warmup_end_epoch = warmup;
        let mut label = components_label(components);
        if multi_warmup {
            label = format!("{label}_w{warmup}");
        }
        cfg.output_dir = base.output_dir.as_ref().map(|d| d.join(&label));
        let teacher = load_teacher(&cfg)?;
        let outcome = distill_with(&cfg, data, Some(teacher), None)?;
        let baseline = rows.first().map_or(outcome.final_test.top1, |r| r.top1);
        rows.push(AblationRow {
            label,
            instance: components.instance,
            sample: components.sample,
            category: components.category,
            warmup_end_epoch: warmup,
            top1: outcome.final_test.top1,
            top5: outcome.final_test.top5,
            best_top1: outcome.best_top1,
            delta_top1: outcome.final_test.top1 - baseline,
        });
    }
    let table = AblationTable { rows };
    if let Some(dir) = &base.output_dir {
        fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
        table.write_csv(&dir.join(ABLATION_CSV))?;
    }
    Ok(table)
}
