//! Dataset manifest: counts, shape and checksums of the record files in a
//! dataset directory.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "mcld-image-records";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    pub file: String,
    pub records: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub num_classes: usize,
    pub image_shape: [usize; 3],
    pub train: SplitEntry,
    pub test: SplitEntry,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
    /// Free-form description of how the data was produced.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

impl DatasetManifest {
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Self = serde_json::from_slice(bytes).map_err(|e| Error::Format(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!("unexpected manifest format `{}`", self.format)));
        }
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest version {}", self.version)));
        }
        if !(2..=256).contains(&self.num_classes) {
            return Err(Error::Format(format!("num_classes {} outside 2..=256", self.num_classes)));
        }
        if self.image_shape.iter().any(|&d| d == 0 || d > 4096) {
            return Err(Error::Format(format!("bad image shape {:?}", self.image_shape)));
        }
        for s in [&self.train, &self.test] {
            if s.file.contains('/') || s.file.contains('\\') || s.file.starts_with('.') {
                return Err(Error::Format(format!("split file `{}` must be a plain name", s.file)));
            }
        }
        if self.train.file == self.test.file {
            return Err(Error::Format("train and test must be distinct files".into()));
        }
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        Self::parse(&bytes)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
