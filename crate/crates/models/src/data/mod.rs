//! Image datasets: storage, loading, normalization, augmentation and
//! batching.

pub mod cifar;
pub mod folder;
pub mod manifest;
pub mod synth;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use manifest::DatasetManifest;
pub use synth::{synthesize_dataset, synthesize_images, SynthOptions};

/// Images stored as `u8` in channel-planar layout, one after another.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageSet {
    pub shape: [usize; 3],
    pub pixels: Vec<u8>,
    pub labels: Vec<usize>,
}

impl ImageSet {
    pub fn empty(shape: [usize; 3]) -> Self {
        Self { shape, pixels: Vec::new(), labels: Vec::new() }
    }

    pub fn image_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.image_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    pub fn pixel(&self, i: usize, c: usize, y: usize, x: usize) -> u8 {
        let [_, h, w] = self.shape;
        self.image(i)[(c * h + y) * w + x]
    }

    pub fn push(&mut self, image: &[u8], label: usize) -> Result<()> {
        if image.len() != self.image_len() {
            return Err(Error::Shape(format!("image has {} values, expected {}", image.len(), self.image_len())));
        }
        self.pixels.extend_from_slice(image);
        self.labels.push(label);
        Ok(())
    }

    pub fn extend(&mut self, other: ImageSet) -> Result<()> {
        if other.shape != self.shape {
            return Err(Error::Shape(format!("cannot append {:?} images to a {:?} set", other.shape, self.shape)));
        }
        self.pixels.extend(other.pixels);
        self.labels.extend(other.labels);
        Ok(())
    }

    pub fn select(&self, indices: &[usize]) -> ImageSet {
        let mut out = ImageSet::empty(self.shape);
        for &i in indices {
            out.pixels.extend_from_slice(self.image(i));
            out.labels.push(self.labels[i]);
        }
        out
    }

    /// The first `n` images of every class, in stored order.
    pub fn take_per_class(&self, n: usize, num_classes: usize) -> ImageSet {
        let mut seen = vec![0usize; num_classes];
        let keep: Vec<usize> = (0..self.len())
            .filter(|&i| {
                let y = self.labels[i];
                seen[y] += 1;
                seen[y] <= n
            })
            .collect();
        self.select(&keep)
    }

    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for &y in &self.labels {
            if y < num_classes {
                counts[y] += 1;
            }
        }
        counts
    }

    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.labels.iter().find(|&&y| y >= num_classes) {
            Some(&label) => Err(Error::LabelOutOfRange { label, num_classes }),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    CifarBinaryDir,
    ImageFolder,
    Synthetic,
}

impl FromStr for DataSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cifar_binary_dir" => Ok(Self::CifarBinaryDir),
            "image_folder" => Ok(Self::ImageFolder),
            "synthetic" => Ok(Self::Synthetic),
            other => Err(Error::InvalidSpec(format!("unknown data source `{other}`"))),
        }
    }
}

impl fmt::Display for DataSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CifarBinaryDir => "cifar_binary_dir",
            Self::ImageFolder => "image_folder",
            Self::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Augmentation {
    pub random_crop_padding: usize,
    pub horizontal_flip: bool,
    pub normalize: bool,
}

impl Default for Augmentation {
    fn default() -> Self {
        Self { random_crop_padding: 4, horizontal_flip: true, normalize: true }
    }
}

impl Augmentation {
    pub const NONE: Self = Self { random_crop_padding: 0, horizontal_flip: false, normalize: false };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Directory to read from. Synthetic data is generated in memory when
    /// this is unset.
    pub path: Option<PathBuf>,
    pub num_classes: usize,
    pub image_shape: [usize; 3],
    pub train_per_class: Option<usize>,
    pub test_per_class: Option<usize>,
    pub batch_size: usize,
    pub augment: Augmentation,
    /// Seed for synthetic generation. Shuffling takes its own seed.
    pub seed: u64,
    pub synthetic: SynthOptions,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            path: None,
            num_classes: 10,
            image_shape: [3, 32, 32],
            train_per_class: None,
            test_per_class: None,
            batch_size: 64,
            augment: Augmentation::default(),
            seed: 0,
            synthetic: SynthOptions::default(),
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidSpec("num_classes must be at least 2".into()));
        }
        if self.image_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!("invalid image shape {:?}", self.image_shape)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be positive".into()));
        }
        if self.train_per_class == Some(0) || self.test_per_class == Some(0) {
            return Err(Error::InvalidSpec("per-class limits must be positive".into()));
        }
        if self.source != DataSource::Synthetic && self.path.is_none() {
            return Err(Error::InvalidSpec(format!("source {} needs a path", self.source)));
        }
        Ok(())
    }
}

/// Per-channel mean and standard deviation on the `[0, 1]` pixel scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl ChannelStats {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn compute(set: &ImageSet) -> Self {
        let [c, h, w] = set.shape;
        let plane = h * w;
        let mut sum = vec![0f64; c];
        let mut sq = vec![0f64; c];
        for i in 0..set.len() {
            let img = set.image(i);
            for ch in 0..c {
                for &p in &img[ch * plane..(ch + 1) * plane] {
                    let v = p as f64 / 255.0;
                    sum[ch] += v;
                    sq[ch] += v * v;
                }
            }
        }
        let n = (set.len() * plane).max(1) as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq.iter().zip(&mean).map(|(s, m)| ((s / n - m * m).max(0.0).sqrt()).max(1e-3) as f32).collect();
        Self { mean: mean.into_iter().map(|m| m as f32).collect(), std }
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Array4<f32>,
    pub labels: Vec<usize>,
    /// Positions of the batch items within their split.
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: ImageSet,
    pub test: ImageSet,
    pub num_classes: usize,
    pub stats: ChannelStats,
    pub batch_size: usize,
    pub augment: Augmentation,
}

impl Dataset {
    /// Normalization statistics come from the full `train` set.
    pub fn new(
        train: ImageSet,
        test: ImageSet,
        num_classes: usize,
        batch_size: usize,
        augment: Augmentation,
    ) -> Result<Self> {
        if train.shape != test.shape {
            return Err(Error::Shape(format!(
                "train images {:?} and test images {:?} differ",
                train.shape, test.shape
            )));
        }
        if batch_size == 0 {
            return Err(Error::InvalidSpec("batch_size must be positive".into()));
        }
        train.check_labels(num_classes)?;
        test.check_labels(num_classes)?;
        let stats =
            if augment.normalize { ChannelStats::compute(&train) } else { ChannelStats::identity(train.shape[0]) };
        Ok(Self { train, test, num_classes, stats, batch_size, augment })
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.train.shape
    }

    pub fn split(&self, split: Split) -> &ImageSet {
        match split {
            Split::Train => &self.train,
            Split::Test => &self.test,
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.batch_size)
    }

    /// Shuffled, augmented training batches. The order depends only on
    /// `seed` and `epoch`.
    pub fn train_batches(&self, seed: u64, epoch: usize) -> BatchIter<'_> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng);
        BatchIter {
            set: &self.train,
            stats: &self.stats,
            order,
            pos: 0,
            batch_size: self.batch_size,
            augment: Some((self.augment, rng)),
        }
    }

    /// Batches in stored order with no augmentation beyond normalization.
    pub fn eval_batches(&self, split: Split) -> BatchIter<'_> {
        let set = self.split(split);
        BatchIter {
            set,
            stats: &self.stats,
            order: (0..set.len()).collect(),
            pos: 0,
            batch_size: self.batch_size,
            augment: None,
        }
    }
}

pub struct BatchIter<'a> {
    set: &'a ImageSet,
    stats: &'a ChannelStats,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: Option<(Augmentation, ChaCha8Rng)>,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let [c, h, w] = self.set.shape;
        let mut images = Array4::<f32>::zeros((indices.len(), c, h, w));
        let mut labels = Vec::with_capacity(indices.len());
        for (b, &i) in indices.iter().enumerate() {
            let (pad, flip, ox, oy) = match &mut self.augment {
                Some((aug, rng)) => {
                    let p = aug.random_crop_padding;
                    let flip = aug.horizontal_flip && rng.random_bool(0.5);
                    let (ox, oy) =
                        if p > 0 { (rng.random_range(0..=2 * p), rng.random_range(0..=2 * p)) } else { (0, 0) };
                    (p, flip, ox, oy)
                }
                None => (0, false, 0, 0),
            };
            let img = self.set.image(i);
            let mut out = images.index_axis_mut(ndarray::Axis(0), b);
            for ch in 0..c {
                let (m, s) = (self.stats.mean[ch], self.stats.std[ch]);
                for y in 0..h {
                    let sy = (y + oy) as isize - pad as isize;
                    for x in 0..w {
                        let xx = if flip { w - 1 - x } else { x };
                        let sx = (xx + ox) as isize - pad as isize;
                        let raw = if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
                            img[(ch * h + sy as usize) * w + sx as usize] as f32 / 255.0
                        } else {
                            0.0
                        };
                        out[[ch, y, x]] = (raw - m) / s;
                    }
                }
            }
            labels.push(self.set.labels[i]);
        }
        Some(Batch { images, labels, indices })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.order.len() - self.pos).div_ceil(self.batch_size);
        (left, Some(left))
    }
}

impl ExactSizeIterator for BatchIter<'_> {}

fn read_manifest_dir(dir: &Path, spec: &DatasetSpec) -> Result<(ImageSet, ImageSet)> {
    let m = DatasetManifest::read(dir)?;
    if m.num_classes != spec.num_classes || m.image_shape != spec.image_shape {
        return Err(Error::InvalidSpec(format!(
            "manifest describes {} classes of {:?}, spec asks for {} classes of {:?}",
            m.num_classes, m.image_shape, spec.num_classes, spec.image_shape
        )));
    }
    let mut sets = Vec::with_capacity(2);
    for entry in [&m.train, &m.test] {
        let path = dir.join(&entry.file);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let digest = manifest::sha256_hex(&bytes);
        if digest != entry.sha256 {
            return Err(Error::Format(format!("checksum mismatch for {}", path.display())));
        }
        let set = cifar::parse_records(&bytes, m.image_shape, m.num_classes)?;
        if set.len() != entry.records {
            return Err(Error::Format(format!(
                "{} holds {} records, manifest says {}",
                path.display(),
                set.len(),
                entry.records
            )));
        }
        sets.push(set);
    }
    let test = sets.pop().expect("two splits");
    let train = sets.pop().expect("two splits");
    Ok((train, test))
}

/// Loads both splits described by `spec`, applies the per-class limits and
/// computes normalization statistics on the full training split.
pub fn load_dataset(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let (train, test) = match (spec.source, &spec.path) {
        (DataSource::Synthetic, None) => {
            synthesize_images(spec.num_classes, spec.image_shape, spec.seed, &spec.synthetic)?
        }
        (DataSource::Synthetic, Some(dir)) => read_manifest_dir(dir, spec)?,
        (DataSource::CifarBinaryDir, Some(dir)) => {
            if dir.join(manifest::MANIFEST_FILE).exists() {
                read_manifest_dir(dir, spec)?
            } else {
                if spec.image_shape != cifar::CIFAR10_SHAPE || spec.num_classes != 10 {
                    return Err(Error::InvalidSpec("a directory without a manifest is read as CIFAR-10".into()));
                }
                cifar::read_cifar10_dir(dir)?
            }
        }
        (DataSource::ImageFolder, Some(dir)) => folder::load_image_folder(dir, spec.image_shape, spec.num_classes)?,
        (_, None) => unreachable!("validated above"),
    };
    let stats_source = train.clone();
    let train = match spec.train_per_class {
        Some(n) => train.take_per_class(n, spec.num_classes),
        None => train,
    };
    let test = match spec.test_per_class {
        Some(n) => test.take_per_class(n, spec.num_classes),
        None => test,
    };
    if train.is_empty() {
        return Err(Error::InvalidSpec("training split is empty".into()));
    }
    let mut ds = Dataset::new(train, test, spec.num_classes, spec.batch_size, spec.augment)?;
    if spec.augment.normalize {
        ds.stats = ChannelStats::compute(&stats_source);
    }
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> DatasetSpec {
        DatasetSpec {
            num_classes: 10,
            image_shape: [3, 8, 8],
            batch_size: 64,
            synthetic: SynthOptions { per_class: 100, test_per_class: 10, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn synthetic_ten_by_hundred_is_balanced() {
        let ds = load_dataset(&small_spec()).unwrap();
        assert_eq!(ds.train.len(), 1000);
        assert!(ds.train.class_counts(10).iter().all(|&c| c == 100));
        let batches: Vec<Batch> = ds.train_batches(0, 0).collect();
        assert_eq!(batches.len(), 16);
        assert_eq!(batches.last().unwrap().len(), 1000 - 15 * 64);
        let mut seen: Vec<usize> = batches.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..1000).collect::<Vec<_>>());
    }

    #[test]
    fn batch_order_is_seeded() {
        let ds = load_dataset(&small_spec()).unwrap();
        let order = |seed, epoch| -> Vec<usize> { ds.train_batches(seed, epoch).flat_map(|b| b.indices).collect() };
        assert_eq!(order(3, 1), order(3, 1));
        assert_ne!(order(3, 1), order(3, 2));
        assert_ne!(order(3, 1), order(4, 1));
        let a: Vec<_> = ds.train_batches(3, 1).map(|b| b.images).collect();
        let b: Vec<_> = ds.train_batches(3, 1).map(|b| b.images).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn eval_batches_are_plain_and_normalized() {
        let mut spec = small_spec();
        spec.augment = Augmentation { random_crop_padding: 0, horizontal_flip: false, normalize: true };
        let ds = load_dataset(&spec).unwrap();
        let mut sum = [0f64; 3];
        let mut count = 0usize;
        for batch in ds.eval_batches(Split::Train) {
            for ch in 0..3 {
                sum[ch] += batch.images.index_axis(ndarray::Axis(1), ch).iter().map(|&v| v as f64).sum::<f64>();
            }
            count += batch.len() * 64;
        }
        for s in sum {
            assert!((s / count as f64).abs() < 1e-3);
        }
        let first = ds.eval_batches(Split::Test).next().unwrap();
        assert_eq!(first.indices, (0..64).collect::<Vec<_>>());
    }

    #[test]
    fn crop_and_flip_move_pixels() {
        let mut set = ImageSet::empty([1, 2, 3]);
        set.push(&[1, 2, 3, 4, 5, 6], 0).unwrap();
        let aug = Augmentation { random_crop_padding: 0, horizontal_flip: true, normalize: false };
        let ds = Dataset::new(set.clone(), set, 2, 1, aug).unwrap();
        let mut saw_flip = false;
        for epoch in 0..20 {
            let b = ds.train_batches(0, epoch).next().unwrap();
            let row: Vec<f32> = b.images.iter().map(|v| (v * 255.0).round()).collect();
            if row == vec![3.0, 2.0, 1.0, 6.0, 5.0, 4.0] {
                saw_flip = true;
            } else {
                assert_eq!(row, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
            }
        }
        assert!(saw_flip);
    }

    #[test]
    fn per_class_limits_and_label_checks() {
        let mut spec = small_spec();
        spec.train_per_class = Some(7);
        let ds = load_dataset(&spec).unwrap();
        assert_eq!(ds.train.class_counts(10), vec![7; 10]);
        let mut bad = ImageSet::empty([1, 1, 1]);
        bad.push(&[0], 5).unwrap();
        assert!(matches!(
            Dataset::new(bad.clone(), bad, 3, 1, Augmentation::NONE),
            Err(Error::LabelOutOfRange { label: 5, .. })
        ));
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let spec = DatasetSpec {
            source: DataSource::CifarBinaryDir,
            path: Some("/nonexistent/mcld".into()),
            image_shape: cifar::CIFAR10_SHAPE,
            ..Default::default()
        };
        assert!(matches!(load_dataset(&spec), Err(Error::Io { .. })));
    }
}
