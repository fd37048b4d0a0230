//! Burst detection and splitting, zero imputation, and normalization.

mod burst;
mod normalize;
mod stats;

pub use burst::{
    BurstCheck, BurstDetector, BurstSeries, BurstSplit, DEFAULT_THRESHOLD, ImputeScope,
    MIN_BURST_WINDOW, NonBurstSeries, split_burst,
};
pub use normalize::{NormScheme, NormStats, NormalizedWindow, Normalizer, STD_FLOOR, Scaling};
pub use stats::{BurstStats, burst_stats};
