//! Per-batch training time against final accuracy, one point per run.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::error::{ReportError, Result};
use crate::render::emit_figure;
use crate::sidecar::Sidecar;
use crate::tsne::min_max;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub run: String,
    pub method: String,
    pub seconds_per_batch: f64,
    pub top1: f64,
}

/// Reads a `metrics.jsonl` file: mean `wall_seconds_per_batch` over training
/// rows and `top1` of the last test row (or last row when no split is given).
pub fn timing_row(path: &Path) -> Result<TimingRow> {
    let text = fs::read_to_string(path).map_err(|e| ReportError::io(path, e))?;
    let mut times = Vec::new();
    let mut top1 = None;
    let mut method = None;
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: Value = serde_json::from_str(line)
            .map_err(|e| ReportError::Sidecar(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let split = v.get("split").and_then(Value::as_str);
        if method.is_none() {
            method = v.get("method").and_then(Value::as_str).map(str::to_string);
        }
        if split != Some("test") {
            if let Some(t) = v.get("wall_seconds_per_batch").and_then(Value::as_f64) {
                if split == Some("train") || split.is_none() {
                    times.push(t);
                }
            }
        }
        if split == Some("test") || split.is_none() {
            if let Some(a) = v.get("top1").and_then(Value::as_f64) {
                top1 = Some(a);
            }
        }
    }
    if times.is_empty() || times.iter().any(|t| !t.is_finite() || *t <= 0.0) {
        return Err(ReportError::MissingTiming(path.to_path_buf()));
    }
    let top1 = top1.ok_or_else(|| ReportError::Sidecar(format!("{} has no accuracy", path.display())))?;
    let run = path
        .parent()
        .and_then(|p| p.file_name())
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned());
    Ok(TimingRow {
        run,
        method: method.unwrap_or_else(|| "unknown".into()),
        seconds_per_batch: times.iter().sum::<f64>() / times.len() as f64,
        top1,
    })
}

/// Scatter of per-batch time (x) against top-1 (y), coloured by method in
/// order of first appearance. The sidecar doubles as the run table.
pub fn timing_accuracy_scatter(metric_files: &[PathBuf], png_path: &Path) -> Result<Vec<TimingRow>> {
    if metric_files.is_empty() {
        return Err(ReportError::Degenerate("no metric files given".into()));
    }
    let rows = metric_files.iter().map(|p| timing_row(p)).collect::<Result<Vec<_>>>()?;
    let mut methods: Vec<&str> = Vec::new();
    for r in &rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let (xmin, xmax) = min_max(rows.iter().map(|r| r.seconds_per_batch));
    let (ymin, ymax) = min_max(rows.iter().map(|r| r.top1));
    let pad = |lo: f64, hi: f64| if hi > lo { (hi - lo) * 0.1 } else { lo.abs().max(1.0) * 0.1 };
    let mut s = Sidecar::new(&["x", "y", "group", "run", "method"]);
    for (k, v) in [
        ("kind", "scatter"),
        ("figure", "timing_accuracy"),
        ("width", "640"),
        ("height", "480"),
        ("margin", "24"),
        ("radius", "5"),
    ] {
        s.set(k, v);
    }
    s.set("x_label", "seconds_per_batch");
    s.set("y_label", "top1");
    s.set("xmin", xmin - pad(xmin, xmax));
    s.set("xmax", xmax + pad(xmin, xmax));
    s.set("ymin", ymin - pad(ymin, ymax));
    s.set("ymax", ymax + pad(ymin, ymax));
    for r in &rows {
        let g = methods.iter().position(|m| *m == r.method).expect("collected above");
        s.push_row(vec![
            r.seconds_per_batch.to_string(),
            r.top1.to_string(),
            g.to_string(),
            r.run.clone(),
            r.method.clone(),
        ]);
    }
    emit_figure(&s, png_path)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_timing_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("metrics.jsonl");
        fs::write(&p, "{\"epoch\":1,\"split\":\"train\",\"top1\":5.0}\n").unwrap();
        assert!(matches!(timing_row(&p), Err(ReportError::MissingTiming(_))));
    }
}
