//! The online forecasting loop and its evaluation.
//!
//! [`train_pool`] fits everything on the training split: burst split, one
//! forecaster per pool entry, the burst-occurrence classifier and the
//! calibration map. [`run_online`] then walks the test epochs: for each
//! epoch `t` it forecasts `t + 1` from a window of history, falls back to
//! the latest measurement on pairs forecast to burst, and appends the
//! measured matrix before moving on.

mod metrics;
mod online;
mod pool;

pub use metrics::{MetricsReport, SelectionRatio, burst_scores, evaluate, per_od_mae_cdf};
pub use online::{ForecastOutcome, OnlineConfig, Source, Strategy, run_online, uncertainty_windows};
pub use pool::{PoolConfig, TrainedPool, train_pool};
