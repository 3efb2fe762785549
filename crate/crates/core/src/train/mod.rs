//! The optimization loop, its configuration and checkpoints.

mod adam;
mod checkpoint;
mod config;
mod trainer;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, ConfigEcho, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AdamConfig, BridgeConfig, ProviderKind, RenderSize, TrainConfig};
pub use trainer::{render_checkpoint, run_to_completion, train_init, OutputDir, StepMetrics, TrainReport, Trainer, SNAPSHOT_VIEW};
