//! Two-stream architecture, training and evaluation.

mod config;
mod data;
pub mod metrics;
mod network;
mod train;

pub use config::{ArchitectureConfig, FusionMode, Regularizer, StreamMode};
pub use data::{Batch, Dataset, Standardizer, Targets};
pub use metrics::{ClassificationMetrics, Metrics, RegressionMetrics};
pub use network::{fusion_weights, InputDims, SpatioTemporalNet};
pub use train::{decide, evaluate, load_checkpoint, to_checkpoint, train, train_with, EpochRecord, TrainConfig, TrainLog};
