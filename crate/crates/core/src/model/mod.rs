//! The standard and improved predictors with training, metrics, rollouts
//! and the side-by-side comparison.
//!
//! Improved: Conv3d lift + ReLU, residual Conv3d blocks and SE attention over
//! the whole `(T, C, h, w)` block, a ConvLSTM over time, and a Conv3d head
//! back to the physical channels. Standard: stacked ConvLSTM layers and the
//! same head. Both end in a sigmoid so outputs stay in the normalized range.

mod adam;
pub mod checkpoint;
mod compare;
mod config;
mod metrics;
mod network;
mod train;

pub use adam::Adam;
pub use compare::{compare, CompareRun, Comparison, Row, VariantResult};
pub use config::{ModelConfig, Variant};
pub use metrics::{metrics, ssim_plane, MetricMean, MetricTriple, SSIM_C1, SSIM_C2, SSIM_RANGE};
pub use network::{ForwardCache, Network};
pub use train::{
    evaluate, evaluate_persistence, evaluate_rollout, persistence, rollout, to_precision, train, train_with,
    EpochRecord, FrameIndex, TrainOptions, TrainReport,
};
