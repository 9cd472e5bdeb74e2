//! `root/{train,test}/<class>/<image>` directory trees.

use std::fs;
use std::path::{Path, PathBuf};

use image::imageops::FilterType;

use crate::error::{Error, Result};

use super::ImageSet;

fn sorted_entries(dir: &Path, dirs: bool) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() == dirs {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Class names are the subdirectory names of `root/train`, sorted.
pub fn class_names(root: &Path) -> Result<Vec<String>> {
    Ok(sorted_entries(&root.join("train"), true)?
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect())
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "jpg" | "jpeg")
    )
}

fn load_split(dir: &Path, classes: &[String], shape: [usize; 3]) -> Result<ImageSet> {
    let [c, h, w] = shape;
    if c != 1 && c != 3 {
        return Err(Error::InvalidSpec(format!("image folders need 1 or 3 channels, got {c}")));
    }
    let mut set = ImageSet::empty(shape);
    let mut planar = vec![0u8; c * h * w];
    for (label, name) in classes.iter().enumerate() {
        let class_dir = dir.join(name);
        if !class_dir.is_dir() {
            continue;
        }
        for path in sorted_entries(&class_dir, false)?.into_iter().filter(|p| is_image(p)) {
            let img = image::open(&path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?.resize_exact(
                w as u32,
                h as u32,
                FilterType::Triangle,
            );
            if c == 1 {
                planar.copy_from_slice(img.to_luma8().as_raw());
            } else {
                let rgb = img.to_rgb8();
                for (i, px) in rgb.pixels().enumerate() {
                    for ch in 0..3 {
                        planar[ch * h * w + i] = px[ch];
                    }
                }
            }
            set.push(&planar, label)?;
        }
    }
    Ok(set)
}

/// Loads both splits, resizing every image to `shape`.
pub fn load_image_folder(root: &Path, shape: [usize; 3], num_classes: usize) -> Result<(ImageSet, ImageSet)> {
    let classes = class_names(root)?;
    if classes.len() != num_classes {
        return Err(Error::InvalidSpec(format!(
            "{} has {} class directories, expected {num_classes}",
            root.join("train").display(),
            classes.len()
        )));
    }
    Ok((load_split(&root.join("train"), &classes, shape)?, load_split(&root.join("test"), &classes, shape)?))
}
