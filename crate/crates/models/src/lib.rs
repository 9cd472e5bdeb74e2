//! Small convolutional networks and image datasets that run on a CPU.

pub mod data;
pub mod error;
pub mod nn;
pub mod zoo;

pub use data::{
    load_dataset, Augmentation, Batch, ChannelStats, DataSource, Dataset, DatasetSpec, ImageSet, Split, SynthOptions,
};
pub use error::{Error, Result};
pub use zoo::{build_model, Architecture, ForwardOutput, ModelSpec, NamedTensor, Network};
