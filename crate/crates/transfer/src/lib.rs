//! Transfer evaluation: penultimate features of a frozen network are fed to
//! a linear classifier trained on another dataset.

pub mod error;
pub mod probe;
pub mod table;

use std::path::Path;

use mcld_models::{load_dataset, Dataset, DatasetSpec, Network, Split};
use mcld_train::{load_model, predict_split};

pub use error::{Result, TransferError};
pub use probe::{linear_probe, ProbeConfig, ProbeResult};
pub use table::{FeatureManifest, FeatureTable};

/// Penultimate features of every image in `split`, in stored order. The
/// network runs in inference mode and its parameters are not touched.
pub fn extract_features(model: &mut Network, data: &Dataset, split: Split) -> Result<FeatureTable> {
    let shape = data.image_shape();
    if shape[0] != model.spec().in_channels {
        return Err(TransferError::Dimension(format!(
            "model takes {} channels, images have {}",
            model.spec().in_channels,
            shape[0]
        )));
    }
    let out = predict_split(model, data, split);
    FeatureTable::new(out.features, out.labels)
}

/// Extracts train and test features of `spec` with the network stored in
/// `checkpoint`, writes them to `out_dir` with a manifest, and returns them.
pub fn extract_to_dir(checkpoint: &Path, spec: &DatasetSpec, out_dir: &Path) -> Result<(FeatureTable, FeatureTable)> {
    let (mut model, _) = load_model(checkpoint)?;
    let data = load_dataset(spec)?;
    let train = extract_features(&mut model, &data, Split::Train)?;
    let test = extract_features(&mut model, &data, Split::Test)?;
    std::fs::create_dir_all(out_dir).map_err(|e| TransferError::io(out_dir, e))?;
    let mut manifest = FeatureManifest::new(Some(checkpoint.display().to_string()), spec.num_classes);
    manifest.add(out_dir, "train", &train)?;
    manifest.add(out_dir, "test", &test)?;
    manifest.write(out_dir)?;
    Ok((train, test))
}
