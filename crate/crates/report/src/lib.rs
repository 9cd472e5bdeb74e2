//! Figures for distillation runs: t-SNE embeddings of features, teacher
//! versus student logit-correlation differences, and a time/accuracy
//! scatter. Each figure is written as a PNG plus a CSV sidecar from which the
//! PNG can be regenerated bit for bit.

pub mod correlation;
pub mod error;
pub mod render;
pub mod sidecar;
pub mod timing;
pub mod tsne;

pub use correlation::{correlation_diff, pearson_columns, CorrelationDiff, CorrelationMatrix};
pub use error::{ReportError, Result};
pub use render::{emit_figure, render, render_file, sidecar_path_for};
pub use sidecar::Sidecar;
pub use timing::{timing_accuracy_scatter, timing_row, TimingRow};
pub use tsne::{tsne, tsne_plot, TsneConfig};
