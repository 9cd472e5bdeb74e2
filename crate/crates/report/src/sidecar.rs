//! Plot data files.
//!
//! A sidecar is a CSV table preceded by `# key=value` metadata lines. The
//! metadata names the figure kind and its geometry and colour-scale bounds;
//! the table holds one row per drawn element. Numbers are written in Rust's
//! shortest round-trip form, so parsing a sidecar recovers every value
//! exactly.

use std::fs;
use std::path::Path;

use crate::error::{ReportError, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sidecar {
    pub meta: Vec<(String, String)>,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn bad(msg: impl Into<String>) -> ReportError {
    ReportError::Sidecar(msg.into())
}

impl Sidecar {
    pub fn new(header: &[&str]) -> Self {
        Self { meta: Vec::new(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Result<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str()).ok_or_else(|| bad(format!("missing `{key}`")))
    }

    pub fn get_f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key)?;
        let x: f64 = v.parse().map_err(|_| bad(format!("`{key}` is not a number: {v}")))?;
        if !x.is_finite() {
            return Err(bad(format!("`{key}` is not finite")));
        }
        Ok(x)
    }

    pub fn get_usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key)?;
        v.parse().map_err(|_| bad(format!("`{key}` is not a count: {v}")))
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column `{name}`")))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory csv");
        for row in &self.rows {
            w.write_record(row).expect("in-memory csv");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 input"));
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = Vec::new();
        let mut rest = text;
        while let Some(line) = rest.strip_prefix('#') {
            let (line, tail) = line.split_once('\n').unwrap_or((line, ""));
            let (k, v) =
                line.trim().split_once('=').ok_or_else(|| bad(format!("metadata line without `=`: {line}")))?;
            meta.push((k.trim().to_string(), v.trim().to_string()));
            rest = tail;
        }
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(rest.as_bytes());
        let header: Vec<String> = r.headers().map_err(|e| bad(e.to_string()))?.iter().map(str::to_string).collect();
        if header.is_empty() || header.iter().all(|h| h.is_empty()) {
            return Err(bad("no table header"));
        }
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Self { meta, header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| ReportError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| ReportError::io(path, e))?;
        Self::parse(&text)
    }
}

/// Parses one cell as a finite number; an empty cell is `None`.
pub fn parse_cell(cell: &str) -> Result<Option<f64>> {
    if cell.is_empty() {
        return Ok(None);
    }
    let x: f64 = cell.parse().map_err(|_| bad(format!("not a number: {cell}")))?;
    if !x.is_finite() {
        return Err(bad(format!("not finite: {cell}")));
    }
    Ok(Some(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_metadata_and_values() {
        let mut s = Sidecar::new(&["x", "label"]);
        s.set("kind", "scatter");
        s.set("xmin", 0.1f64 + 0.2);
        s.push_row(vec![(1.0f64 / 3.0).to_string(), "a,b".into()]);
        let back = Sidecar::parse(&s.to_text()).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.get_f64("xmin").unwrap(), 0.1 + 0.2);
        assert_eq!(parse_cell(&back.rows[0][0]).unwrap(), Some(1.0 / 3.0));
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(Sidecar::parse("# novalue\nx\n").is_err());
        assert!(Sidecar::parse("").is_err());
        assert!(parse_cell("NaN").is_err());
        assert_eq!(parse_cell("").unwrap(), None);
    }
}
