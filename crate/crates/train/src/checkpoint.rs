//! Binary checkpoint files.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `MCLDCKPT` |
//! | 4     | format version (`u32`) |
//! | 32    | SHA-256 fingerprint of the run configuration |
//! | 4     | header length `n` (`u32`) |
//! | n     | UTF-8 JSON header |
//! | rest  | tensor payload in header order |
//!
//! The header lists every tensor with its group (`weights`, `momentum` or
//! `queue`), name, dtype (`f32`, `f64` or `u32`) and shape. The payload is the
//! concatenation of the tensors' values; no trailing bytes are allowed.

use std::fs;
use std::path::Path;

use mcld_core::LogitQueue;
use mcld_models::{ModelSpec, NamedTensor};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

pub const MAGIC: &[u8; 8] = b"MCLDCKPT";
pub const FORMAT_VERSION: u32 = 1;
const MAX_HEADER: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub struct QueueState {
    pub capacity: usize,
    pub width: usize,
    /// Rows oldest first, row-major.
    pub rows: Vec<f64>,
    pub labels: Vec<u32>,
}

impl QueueState {
    pub fn capture(queue: &LogitQueue) -> Self {
        Self {
            capacity: queue.capacity(),
            width: queue.width(),
            rows: queue.product().ordered_rows().iter().copied().collect(),
            labels: queue.target_mask().ordered_labels().iter().map(|&y| y as u32).collect(),
        }
    }

    pub fn restore(&self) -> Result<LogitQueue> {
        let rows = Array2::from_shape_vec((self.labels.len(), self.width), self.rows.clone())
            .map_err(|e| TrainError::Checkpoint(format!("queue rows: {e}")))?;
        let labels: Vec<usize> = self.labels.iter().map(|&y| y as usize).collect();
        Ok(LogitQueue::from_ordered(self.capacity, &rows, &labels)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: [u8; 32],
    pub model: ModelSpec,
    /// Last completed epoch (1-based).
    pub epoch: usize,
    pub test_top1: f64,
    pub best_top1: f64,
    pub weights: Vec<NamedTensor>,
    pub momentum: Vec<NamedTensor>,
    pub queue: Option<QueueState>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F32,
    F64,
    U32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Group {
    Weights,
    Momentum,
    Queue,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    group: Group,
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelSpec,
    epoch: usize,
    test_top1: f64,
    best_top1: f64,
    #[serde(default)]
    queue_capacity: Option<usize>,
    tensors: Vec<TensorEntry>,
}

fn bad(msg: impl Into<String>) -> TrainError {
    TrainError::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad(format!("truncated: need {n} bytes at offset {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut tensors = Vec::new();
        let mut payload = Vec::new();
        for (group, list) in [(Group::Weights, &self.weights), (Group::Momentum, &self.momentum)] {
            for t in list {
                tensors.push(TensorEntry { group, name: t.name.clone(), dtype: Dtype::F32, shape: t.shape.clone() });
                for v in &t.data {
                    payload.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        if let Some(q) = &self.queue {
            tensors.push(TensorEntry {
                group: Group::Queue,
                name: "logits".into(),
                dtype: Dtype::F64,
                shape: vec![q.labels.len(), q.width],
            });
            for v in &q.rows {
                payload.extend_from_slice(&v.to_le_bytes());
            }
            tensors.push(TensorEntry {
                group: Group::Queue,
                name: "labels".into(),
                dtype: Dtype::U32,
                shape: vec![q.labels.len()],
            });
            for v in &q.labels {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        }
        let header = Header {
            model: self.model.clone(),
            epoch: self.epoch,
            test_top1: self.test_top1,
            best_top1: self.best_top1,
            queue_capacity: self.queue.as_ref().map(|q| q.capacity),
            tensors,
        };
        let header = serde_json::to_vec(&header).expect("checkpoint header serializes");
        let mut out = Vec::with_capacity(48 + header.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&payload);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let fingerprint: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let header_len = r.u32()? as usize;
        if header_len > MAX_HEADER {
            return Err(bad("header too large"));
        }
        let header: Header = serde_json::from_slice(r.take(header_len)?).map_err(|e| bad(format!("header: {e}")))?;
        let mut weights = Vec::new();
        let mut momentum = Vec::new();
        let mut queue_rows: Option<(Vec<usize>, Vec<f64>)> = None;
        let mut queue_labels: Option<Vec<u32>> = None;
        for t in header.tensors {
            let count = t
                .shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| bad("tensor size overflows"))?;
            let width = match t.dtype {
                Dtype::F64 => 8,
                Dtype::F32 | Dtype::U32 => 4,
            };
            let raw = r.take(count.checked_mul(width).ok_or_else(|| bad("tensor size overflows"))?)?;
            match (t.group, t.dtype) {
                (Group::Weights | Group::Momentum, Dtype::F32) => {
                    let data =
                        raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
                    let nt = NamedTensor { name: t.name, shape: t.shape, data };
                    if t.group == Group::Weights {
                        weights.push(nt);
                    } else {
                        momentum.push(nt);
                    }
                }
                (Group::Queue, Dtype::F64) if t.name == "logits" && t.shape.len() == 2 => {
                    let data =
                        raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
                    queue_rows = Some((t.shape, data));
                }
                (Group::Queue, Dtype::U32) if t.name == "labels" && t.shape.len() == 1 => {
                    queue_labels =
                        Some(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes"))).collect());
                }
                (g, d) => return Err(bad(format!("unexpected tensor {} ({g:?}, {d:?})", t.name))),
            }
        }
        if r.pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let queue = match (header.queue_capacity, queue_rows, queue_labels) {
            (None, None, None) => None,
            (Some(capacity), Some((shape, rows)), Some(labels)) => {
                if shape[0] != labels.len() || shape[0] > capacity {
                    return Err(bad("queue rows, labels and capacity disagree"));
                }
                Some(QueueState { capacity, width: shape[1], rows, labels })
            }
            _ => return Err(bad("incomplete queue state")),
        };
        Ok(Self {
            fingerprint,
            model: header.model,
            epoch: header.epoch,
            test_top1: header.test_top1,
            best_top1: header.best_top1,
            weights,
            momentum,
            queue,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.encode()).map_err(|e| TrainError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| TrainError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| TrainError::io(path, e))?;
        Self::decode(&bytes)
    }

    pub fn fingerprint_hex(&self) -> String {
        hex::encode(self.fingerprint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcld_core::LogitBatch;
    use mcld_models::Architecture;

    fn sample() -> Checkpoint {
        let mut queue = LogitQueue::new(3, 2).unwrap();
        let batch = LogitBatch::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.25]], vec![1, 0]).unwrap();
        queue.enqueue(&batch).unwrap();
        Checkpoint {
            fingerprint: [7; 32],
            model: ModelSpec {
                architecture: Architecture::PlainConv,
                depth: 1,
                width: 2,
                num_classes: 2,
                in_channels: 1,
            },
            epoch: 4,
            test_top1: 55.5,
            best_top1: 60.0,
            weights: vec![NamedTensor { name: "a".into(), shape: vec![2, 1], data: vec![1.5, -3.0] }],
            momentum: vec![NamedTensor { name: "a".into(), shape: vec![2, 1], data: vec![0.0, 0.1] }],
            queue: Some(QueueState::capture(&queue)),
        }
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        let bytes = ck.encode();
        assert_eq!(&bytes[..8], MAGIC);
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, ck);
        let q = back.queue.unwrap().restore().unwrap();
        assert_eq!(q.target_mask().ordered_labels(), vec![1, 0]);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample().encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::decode(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::decode(&magic).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(Checkpoint::decode(&version).is_err());
        assert!(Checkpoint::decode(&[]).is_err());
    }
}
