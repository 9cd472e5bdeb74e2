//! Class-conditional Gaussian-blob images.
//!
//! Each class owns a prototype made of a few coloured Gaussian blobs. Classes
//! are arranged in groups that share some of their blobs, which gives the
//! problem a similarity structure between classes. Individual samples jitter
//! the prototype (global shift, per-blob amplitude), optionally add random
//! distractor blobs, and add pixel noise.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::cifar::encode_records;
use super::manifest::{sha256_hex, DatasetManifest, SplitEntry, MANIFEST_FORMAT, MANIFEST_VERSION};
use super::ImageSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthOptions {
    pub per_class: usize,
    pub test_per_class: usize,
    /// Standard deviation of additive pixel noise (pixel range is `[0, 1]`).
    pub noise: f32,
    /// Maximum global shift of the prototype, in pixels.
    pub jitter: f32,
    pub blobs_per_class: usize,
    /// Blobs shared by every class in the same group.
    pub shared_blobs: usize,
    pub group_size: usize,
    /// Random blobs added to each sample independently of its class.
    pub distractors: usize,
    /// Blob amplitude relative to the background.
    pub contrast: f32,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            per_class: 100,
            test_per_class: 50,
            noise: 0.08,
            jitter: 1.0,
            blobs_per_class: 3,
            shared_blobs: 1,
            group_size: 2,
            distractors: 0,
            contrast: 0.45,
        }
    }
}

impl SynthOptions {
    pub fn validate(&self) -> Result<()> {
        if self.per_class == 0 || self.test_per_class == 0 {
            return Err(Error::InvalidSpec("per-class counts must be positive".into()));
        }
        if self.blobs_per_class == 0 || self.shared_blobs >= self.blobs_per_class {
            return Err(Error::InvalidSpec(
                "need at least one blob and fewer shared blobs than blobs per class".into(),
            ));
        }
        if self.group_size == 0 {
            return Err(Error::InvalidSpec("group_size must be positive".into()));
        }
        if !(self.noise >= 0.0 && self.jitter >= 0.0 && self.contrast > 0.0) {
            return Err(Error::InvalidSpec("noise, jitter and contrast must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Blob {
    cx: f32,
    cy: f32,
    sigma: f32,
    color: [f32; 3],
}

impl Blob {
    fn random(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Self {
        let side = h.min(w) as f32;
        let mut color = [0f32; 3];
        for c in &mut color {
            *c = rng.random_range(-1.0..1.0);
        }
        let norm = color.iter().map(|c| c * c).sum::<f32>().sqrt().max(1e-3);
        for c in &mut color {
            *c /= norm;
        }
        Self {
            cx: rng.random_range(0.15..0.85) * w as f32,
            cy: rng.random_range(0.15..0.85) * h as f32,
            sigma: rng.random_range(0.07..0.15) * side,
            color,
        }
    }
}

fn prototypes(num_classes: usize, shape: [usize; 3], seed: u64, opts: &SynthOptions) -> Vec<Vec<Blob>> {
    let [_, h, w] = shape;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = num_classes.div_ceil(opts.group_size);
    let shared: Vec<Vec<Blob>> =
        (0..groups).map(|_| (0..opts.shared_blobs).map(|_| Blob::random(&mut rng, h, w)).collect()).collect();
    (0..num_classes)
        .map(|k| {
            let mut blobs = shared[k / opts.group_size].clone();
            blobs.extend((opts.shared_blobs..opts.blobs_per_class).map(|_| Blob::random(&mut rng, h, w)));
            blobs
        })
        .collect()
}

fn render(blobs: &[Blob], shape: [usize; 3], opts: &SynthOptions, rng: &mut ChaCha8Rng, out: &mut Vec<u8>) {
    let [c, h, w] = shape;
    let mut img = vec![0.5f32; c * h * w];
    let (dx, dy) = if opts.jitter > 0.0 {
        (rng.random_range(-opts.jitter..=opts.jitter), rng.random_range(-opts.jitter..=opts.jitter))
    } else {
        (0.0, 0.0)
    };
    let mut draw = |b: &Blob, amp: f32, dx: f32, dy: f32| {
        let inv = 1.0 / (2.0 * b.sigma * b.sigma);
        for y in 0..h {
            for x in 0..w {
                let d2 = (x as f32 - b.cx - dx).powi(2) + (y as f32 - b.cy - dy).powi(2);
                let g = amp * (-d2 * inv).exp();
                for ch in 0..c {
                    img[(ch * h + y) * w + x] += g * b.color[ch % 3];
                }
            }
        }
    };
    for b in blobs {
        let amp = opts.contrast * rng.random_range(0.7..1.3);
        draw(b, amp, dx, dy);
    }
    for _ in 0..opts.distractors {
        let b = Blob::random(rng, h, w);
        let amp = opts.contrast * rng.random_range(0.5..1.0);
        draw(&b, amp, 0.0, 0.0);
    }
    let noise = Normal::new(0.0f32, opts.noise.max(0.0)).expect("finite noise");
    out.extend(img.into_iter().map(|v| {
        let v = if opts.noise > 0.0 { v + noise.sample(rng) } else { v };
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }));
}

fn generate_split(
    protos: &[Vec<Blob>],
    shape: [usize; 3],
    per_class: usize,
    opts: &SynthOptions,
    rng: &mut ChaCha8Rng,
) -> ImageSet {
    let n = per_class * protos.len();
    let mut set = ImageSet {
        shape,
        pixels: Vec::with_capacity(n * shape.iter().product::<usize>()),
        labels: Vec::with_capacity(n),
    };
    for _ in 0..per_class {
        for (k, blobs) in protos.iter().enumerate() {
            render(blobs, shape, opts, rng, &mut set.pixels);
            set.labels.push(k);
        }
    }
    set
}

/// In-memory train and test splits. Classes are interleaved, so any prefix
/// of a split is as balanced as possible.
pub fn synthesize_images(
    num_classes: usize,
    shape: [usize; 3],
    seed: u64,
    opts: &SynthOptions,
) -> Result<(ImageSet, ImageSet)> {
    opts.validate()?;
    if !(2..=256).contains(&num_classes) {
        return Err(Error::InvalidSpec(format!("num_classes {num_classes} outside 2..=256")));
    }
    if shape.contains(&0) || shape[1] < 2 || shape[2] < 2 {
        return Err(Error::InvalidSpec(format!("invalid image shape {shape:?}")));
    }
    let protos = prototypes(num_classes, shape, seed, opts);
    let mut train_rng = ChaCha8Rng::seed_from_u64(seed);
    train_rng.set_stream(1);
    let mut test_rng = ChaCha8Rng::seed_from_u64(seed);
    test_rng.set_stream(2);
    Ok((
        generate_split(&protos, shape, opts.per_class, opts, &mut train_rng),
        generate_split(&protos, shape, opts.test_per_class, opts, &mut test_rng),
    ))
}

/// Generates a dataset and stores it as record files plus a manifest in
/// `out_dir`. Regenerating with the same arguments yields identical bytes.
pub fn synthesize_dataset(
    num_classes: usize,
    shape: [usize; 3],
    seed: u64,
    opts: &SynthOptions,
    out_dir: &Path,
) -> Result<DatasetManifest> {
    let (train, test) = synthesize_images(num_classes, shape, seed, opts)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::new();
    for (name, set) in [("train.bin", &train), ("test.bin", &test)] {
        let bytes = encode_records(set)?;
        let path = out_dir.join(name);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        entries.push(SplitEntry { file: name.to_string(), records: set.len(), sha256: sha256_hex(&bytes) });
    }
    let test_entry = entries.pop().expect("two splits");
    let train_entry = entries.pop().expect("two splits");
    let manifest = DatasetManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        num_classes,
        image_shape: shape,
        train: train_entry,
        test: test_entry,
        class_names: (0..num_classes).map(|k| format!("class_{k}")).collect(),
        generator: Some(serde_json::json!({
            "kind": "gaussian_blobs",
            "seed": seed,
            "options": opts,
        })),
    };
    manifest.write(out_dir)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_balance() {
        let opts = SynthOptions { per_class: 100, test_per_class: 20, ..Default::default() };
        let (train, test) = synthesize_images(10, [3, 8, 8], 1, &opts).unwrap();
        assert_eq!(train.len(), 1000);
        assert_eq!(test.len(), 200);
        for k in 0..10 {
            assert_eq!(train.labels.iter().filter(|&&y| y == k).count(), 100);
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let opts = SynthOptions { per_class: 3, test_per_class: 2, ..Default::default() };
        let a = synthesize_images(4, [3, 8, 8], 5, &opts).unwrap();
        let b = synthesize_images(4, [3, 8, 8], 5, &opts).unwrap();
        let c = synthesize_images(4, [3, 8, 8], 6, &opts).unwrap();
        assert_eq!(a.0.pixels, b.0.pixels);
        assert_ne!(a.0.pixels, c.0.pixels);
        assert_ne!(a.0.pixels, a.1.pixels[..a.0.pixels.len().min(a.1.pixels.len())].to_vec());
    }

    #[test]
    fn rejects_bad_options() {
        let bad = SynthOptions { shared_blobs: 3, blobs_per_class: 3, ..Default::default() };
        assert!(synthesize_images(4, [3, 8, 8], 1, &bad).is_err());
        assert!(synthesize_images(1, [3, 8, 8], 1, &SynthOptions::default()).is_err());
        assert!(synthesize_images(4, [3, 0, 8], 1, &SynthOptions::default()).is_err());
    }
}
