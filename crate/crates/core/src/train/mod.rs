//! Training orchestration: rollouts, advantages, weights, joint policy and λ
//! updates, metrics and checkpoints.

mod checkpoint;
mod config;
mod metrics;
mod trainer;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{SchemeKind, TrainConfig, PROMPT_BUCKETS};
pub use checkpoint::StreamState;
pub use metrics::{read_metrics, MetricsWriter, StepMetrics, METRICS_HEADER};
pub use trainer::{
    checkpoint_name, train_run, RunOutput, StepRollouts, Trainer, FINAL_CHECKPOINT, METRICS_FILE,
};
