//! Fixed-size binary image records: one label byte followed by the pixels as
//! planar `C×H×W` bytes (the CIFAR-10 binary layout for `3×32×32`).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

use super::ImageSet;

pub const CIFAR10_SHAPE: [usize; 3] = [3, 32, 32];
pub const CIFAR10_TRAIN_FILES: [&str; 5] =
    ["data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"];
pub const CIFAR10_TEST_FILE: &str = "test_batch.bin";

pub fn record_len(shape: [usize; 3]) -> usize {
    1 + shape.iter().product::<usize>()
}

/// Parses a whole record file. The byte length must be an exact multiple of
/// the record length and every label must be below `num_classes`.
pub fn parse_records(bytes: &[u8], shape: [usize; 3], num_classes: usize) -> Result<ImageSet> {
    if shape.contains(&0) {
        return Err(Error::InvalidSpec(format!("image shape {shape:?} has a zero dimension")));
    }
    let len = record_len(shape);
    if !bytes.len().is_multiple_of(len) {
        return Err(Error::Format(format!("{} bytes is not a whole number of {len}-byte records", bytes.len())));
    }
    let n = bytes.len() / len;
    let mut labels = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n * (len - 1));
    for rec in bytes.chunks_exact(len) {
        let label = rec[0] as usize;
        if label >= num_classes {
            return Err(Error::LabelOutOfRange { label, num_classes });
        }
        labels.push(label);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(ImageSet { shape, pixels, labels })
}

pub fn encode_records(set: &ImageSet) -> Result<Vec<u8>> {
    let per = set.image_len();
    let mut out = Vec::with_capacity(set.len() * (per + 1));
    for (i, &label) in set.labels.iter().enumerate() {
        let label =
            u8::try_from(label).map_err(|_| Error::Format(format!("label {label} does not fit in one byte")))?;
        out.push(label);
        out.extend_from_slice(&set.pixels[i * per..(i + 1) * per]);
    }
    Ok(out)
}

pub fn read_record_file(path: &Path, shape: [usize; 3], num_classes: usize) -> Result<ImageSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_records(&bytes, shape, num_classes)
}

/// Reads the standard CIFAR-10 binary distribution (five training batches and
/// one test batch) from `dir`.
pub fn read_cifar10_dir(dir: &Path) -> Result<(ImageSet, ImageSet)> {
    let mut train = ImageSet::empty(CIFAR10_SHAPE);
    for f in CIFAR10_TRAIN_FILES {
        train.extend(read_record_file(&dir.join(f), CIFAR10_SHAPE, 10)?)?;
    }
    let test = read_record_file(&dir.join(CIFAR10_TEST_FILE), CIFAR10_SHAPE, 10)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cifar_record_parses_to_planar_image() {
        let mut rec = vec![7u8];
        rec.extend((0..3072).map(|i| (i % 251) as u8));
        let set = parse_records(&rec, CIFAR10_SHAPE, 10).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.labels, vec![7]);
        // red plane first, then green, then blue; row-major within a plane
        assert_eq!(set.pixel(0, 0, 0, 0), 0);
        assert_eq!(set.pixel(0, 0, 1, 0), 32);
        assert_eq!(set.pixel(0, 1, 0, 0), (1024 % 251) as u8);
        assert_eq!(set.pixel(0, 2, 31, 31), (3071 % 251) as u8);
        assert_eq!(encode_records(&set).unwrap(), rec);
    }

    #[test]
    fn truncated_and_out_of_range_records_fail() {
        assert!(matches!(parse_records(&[1, 2, 3], [1, 1, 3], 4), Err(Error::Format(_))));
        assert!(matches!(parse_records(&[9, 0], [1, 1, 1], 4), Err(Error::LabelOutOfRange { label: 9, .. })));
        assert!(parse_records(&[], [1, 1, 1], 4).unwrap().is_empty());
    }
}
