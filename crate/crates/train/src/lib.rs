//! Training and distillation runs for the contrastive logit distillation
//! losses in `mcld-core` on the networks and datasets of `mcld-models`.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod error;
pub mod metrics;
pub mod optim;

pub use ablation::{run_ablation_grid, AblationAxes, AblationRow, AblationTable};
pub use checkpoint::Checkpoint;
pub use config::{DistillRunConfig, KdConfig, Method, OptimizerConfig, TeacherConfig};
pub use engine::{
    accuracy_from_logits, distill, distill_with, evaluate, evaluate_checkpoint, load_model, load_teacher,
    predict_split, train_teacher, train_teacher_on, Accuracy, RunOutcome,
};
pub use error::{Result, TrainError};
pub use metrics::{read_metrics, MetricRecord, MetricsWriter};
