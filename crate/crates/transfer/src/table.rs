//! Feature tables and their on-disk layout.
//!
//! A table file is, little-endian throughout:
//!
//! | bytes        | content |
//! |--------------|---------|
//! | 8            | magic `MCLDFEAT` |
//! | 4            | format version (`u32`, currently 1) |
//! | 8            | row count `n` (`u64`) |
//! | 4            | column count `d` (`u32`) |
//! | 4·n·d        | `f32` values, column after column |
//! | 4·n          | `u32` labels |
//!
//! A directory of tables is described by `features.json`, which names the
//! file, shape and SHA-256 of every split.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, TransferError};

pub const MAGIC: &[u8; 8] = b"MCLDFEAT";
pub const FORMAT_VERSION: u32 = 1;
pub const FEATURE_MANIFEST: &str = "features.json";
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    /// `rows × dim`.
    pub features: Array2<f32>,
    pub labels: Vec<usize>,
}

impl FeatureTable {
    pub fn new(features: Array2<f32>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(TransferError::Dimension(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let (n, d) = self.features.dim();
        let d32 = u32::try_from(d).map_err(|_| TransferError::Format("too many columns".into()))?;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * n * (d + 1));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&d32.to_le_bytes());
        for col in self.features.columns() {
            for v in col {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        for &y in &self.labels {
            let y = u32::try_from(y).map_err(|_| TransferError::Format(format!("label {y} too large")))?;
            out.extend_from_slice(&y.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| TransferError::Format(m);
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
        }
        if &bytes[..8] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let d = u32::from_le_bytes(bytes[20..24].try_into().expect("4 bytes")) as u64;
        let expected = n
            .checked_mul(d.checked_add(1).expect("u32 + 1 fits"))
            .and_then(|c| c.checked_mul(4))
            .and_then(|c| c.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| bad("size overflows".into()))?;
        if expected != bytes.len() as u64 {
            return Err(bad(format!("expected {expected} bytes for {n}×{d}, found {}", bytes.len())));
        }
        let (n, d) = (n as usize, d as usize);
        let body = &bytes[HEADER_LEN..];
        let values: Vec<f32> =
            body[..4 * n * d].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        let labels = body[4 * n * d..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect();
        let features = Array2::from_shape_vec((n, d).f(), values)
            .map_err(|e| bad(e.to_string()))?
            .as_standard_layout()
            .into_owned();
        Self::new(features, labels)
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.encode()?;
        fs::write(path, &bytes).map_err(|e| TransferError::io(path, e))?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| TransferError::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub split: String,
    pub file: String,
    pub rows: usize,
    pub dim: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureManifest {
    pub format: String,
    pub version: u32,
    /// Checkpoint the features were extracted from, if any.
    #[serde(default)]
    pub source: Option<String>,
    pub num_classes: usize,
    pub tables: Vec<TableEntry>,
}

impl FeatureManifest {
    pub fn new(source: Option<String>, num_classes: usize) -> Self {
        Self { format: "mcld-feature-table".into(), version: FORMAT_VERSION, source, num_classes, tables: Vec::new() }
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes).map_err(|e| TransferError::Format(e.to_string()))?;
        if m.format != "mcld-feature-table" || m.version != FORMAT_VERSION {
            return Err(TransferError::Format(format!("unsupported manifest {} v{}", m.format, m.version)));
        }
        Ok(m)
    }

    /// Writes `table` as `<split>.feat` in `dir` and records it.
    pub fn add(&mut self, dir: &Path, split: &str, table: &FeatureTable) -> Result<()> {
        let file = format!("{split}.feat");
        let sha256 = table.save(&dir.join(&file))?;
        self.tables.retain(|t| t.split != split);
        self.tables.push(TableEntry { split: split.into(), file, rows: table.rows(), dim: table.dim(), sha256 });
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FEATURE_MANIFEST);
        let json = serde_json::to_vec_pretty(self).expect("manifest serializes");
        fs::write(&path, json).map_err(|e| TransferError::io(&path, e))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(FEATURE_MANIFEST);
        let bytes = fs::read(&path).map_err(|e| TransferError::io(&path, e))?;
        Self::parse(&bytes)
    }

    /// Loads a split and checks it against the recorded checksum and shape.
    pub fn load_split(&self, dir: &Path, split: &str) -> Result<FeatureTable> {
        let entry = self
            .tables
            .iter()
            .find(|t| t.split == split)
            .ok_or_else(|| TransferError::Format(format!("no `{split}` table in manifest")))?;
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| TransferError::io(&path, e))?;
        if hex::encode(Sha256::digest(&bytes)) != entry.sha256 {
            return Err(TransferError::Format(format!("checksum mismatch for {}", path.display())));
        }
        let table = FeatureTable::decode(&bytes)?;
        if table.rows() != entry.rows || table.dim() != entry.dim {
            return Err(TransferError::Format(format!("{} does not match its manifest entry", path.display())));
        }
        Ok(table)
    }
}
