//! Burst-aware demand-matrix forecasting.
//!
//! The crate is `no_std` and only needs `alloc`. It holds every numeric
//! piece of the forecasting framework:
//!
//! - [`series`]: demand matrices, masked series, windows and train/test splits.
//! - [`preprocess`]: per-window burst detection, burst/non-burst split,
//!   zero imputation and the GLOB / INDV / ROLL z-score normalizers.
//! - [`models`]: the forecaster pool (seasonal-naive, linear AR, MLP,
//!   recurrent), masked-L1 Adam training, MC-dropout inference and the
//!   burst-occurrence classifier.
//! - [`selection`]: Gaussian-NLL distribution calibration and per-window
//!   model selection by smallest calibrated uncertainty.
//! - [`pipeline`]: the online forecast loop with burst gating, plus metrics.
//! - [`synth`]: a modulated-gravity synthetic traffic generator.
//! - [`te`]: path-based traffic-engineering LPs, the reactive baseline and
//!   throughput-degradation sweeps.
//!
//! File formats, persistence and the command-line interface live in the
//! `tubo` crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod error;
pub mod math;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod selection;
pub mod series;
pub mod serde_float;
pub mod synth;
pub mod te;

pub use error::{Error, Result};
pub use series::{DemandMatrix, DmSeries, SplitSpec, Window};
