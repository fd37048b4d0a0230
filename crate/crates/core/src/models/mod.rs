//! The forecaster pool.
//!
//! Every member maps a window of `w` demand matrices to the next one. All
//! trainable members work in normalized space on the off-diagonal OD pairs,
//! are trained with masked L1 loss under Adam, and apply dropout so that
//! Monte-Carlo passes give a predictive spread. The seasonal-naive member is
//! parameter-free and reports its validation residual spread instead.

mod adam;
mod classifier;
mod nets;
mod train;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use classifier::{BurstClassifier, ClassifierConfig};
pub use train::{TrainConfig, TrainSummary, Validation, masked_l1_with_grad};

use crate::error::{Error, Result};
use crate::math;
use crate::preprocess::{NormScheme, Normalizer, Scaling};
use crate::rng;
use crate::series::{DemandMatrix, Window, off_diagonal};
use nets::{Cache, Net};

pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const DEFAULT_MC_PASSES: usize = 30;

/// Architecture of a pool member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    SeasonalNaive { period: usize },
    LinearAr { lags: usize },
    Mlp { lags: usize, hidden: usize },
    Recurrent { lags: usize, hidden: usize },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::SeasonalNaive { .. } => "seasonal-naive",
            ModelKind::LinearAr { .. } => "linear-ar",
            ModelKind::Mlp { .. } => "mlp",
            ModelKind::Recurrent { .. } => "recurrent",
        }
    }

    /// Epochs of the window the member actually reads.
    pub fn lags(&self) -> usize {
        match *self {
            ModelKind::SeasonalNaive { period } => period,
            ModelKind::LinearAr { lags }
            | ModelKind::Mlp { lags, .. }
            | ModelKind::Recurrent { lags, .. } => lags,
        }
    }

    pub fn is_trainable(&self) -> bool {
        !matches!(self, ModelKind::SeasonalNaive { .. })
    }

    pub(crate) fn net(&self, p: usize) -> Option<Net> {
        match *self {
            ModelKind::SeasonalNaive { .. } => None,
            ModelKind::LinearAr { lags } => Some(Net::LinearAr { p, lags }),
            ModelKind::Mlp { lags, hidden } => Some(Net::Mlp { p, lags, hidden }),
            ModelKind::Recurrent { lags, hidden } => Some(Net::Recurrent { p, lags, hidden }),
        }
    }

    /// The default four-member pool for a window of `w` epochs.
    pub fn default_pool(w: usize, season: usize) -> Vec<ModelKind> {
        vec![
            ModelKind::SeasonalNaive { period: season.clamp(1, w) },
            ModelKind::LinearAr { lags: 8.min(w) },
            ModelKind::Mlp { lags: 4.min(w), hidden: 32 },
            ModelKind::Recurrent { lags: 16.min(w), hidden: 8 },
        ]
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What to train: architecture, normalization and dropout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub norm: NormScheme,
    pub dropout: f64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, norm: NormScheme) -> Self {
        let dropout = if kind.is_trainable() { DEFAULT_DROPOUT } else { 0.0 };
        Self { kind, norm, dropout }
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

    /// Stable identifier, e.g. `mlp-indv`.
    pub fn model_id(&self) -> String {
        match self.kind {
            ModelKind::SeasonalNaive { .. } => String::from("seasonal-naive"),
            k => format!("{}-{}", k.name(), self.norm),
        }
    }
}

/// A trained pool member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecaster {
    pub model_id: String,
    pub kind: ModelKind,
    pub nodes: usize,
    pub window: usize,
    pub dropout: f64,
    pub seed: u64,
    pub normalizer: Normalizer,
    pub params: Vec<f64>,
    /// Per-cell validation residual standard deviation (Mbps).
    #[serde(with = "crate::serde_float::vec")]
    pub residual_std: Vec<f64>,
    pub summary: TrainSummary,
}

/// Per-cell MC-dropout mean and standard deviation (Mbps).
#[derive(Debug, Clone, PartialEq)]
pub struct McPrediction {
    pub epoch: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Normalized inputs of one window: `lags × P` values, masked cells as 0.
pub(crate) fn window_features(
    normalizer: &Normalizer,
    window: &Window<'_>,
    offdiag: &[usize],
    lags: usize,
) -> Result<(Vec<f64>, Scaling)> {
    let nw = normalizer.normalize_window(window)?;
    let p = offdiag.len();
    let mut feats = vec![0.0; lags * p];
    let first = window.len() - lags;
    for l in 0..lags {
        for (i, &od) in offdiag.iter().enumerate() {
            feats[l * p + i] = nw.get(first + l, od).unwrap_or(0.0);
        }
    }
    Ok((feats, nw.scaling))
}

/// Seasonal-naive forecast for one cell: the value one period back, or the
/// newest present value if that one is masked.
pub(crate) fn seasonal_value(window: &Window<'_>, od: usize, period: usize) -> f64 {
    let k = window.len() - period;
    window
        .get(k, od)
        .or_else(|| (0..window.len()).rev().find_map(|j| window.get(j, od)))
        .unwrap_or(0.0)
}

impl Forecaster {
    fn check_window(&self, window: &Window<'_>) -> Result<()> {
        if window.len() != self.window {
            return Err(Error::WindowMismatch { expected: self.window, got: window.len() });
        }
        if window.nodes() != self.nodes {
            return Err(Error::NodeMismatch { expected: self.nodes, got: window.nodes() });
        }
        Ok(())
    }

    pub fn is_stochastic(&self) -> bool {
        self.kind.is_trainable() && self.dropout > 0.0
    }

    /// One normalized forward pass over the off-diagonal cells.
    fn forward(
        &self,
        net: &Net,
        feats: &[f64],
        drop: Option<(&mut rng::Rng, f64)>,
        out: &mut [f64],
        cache: &mut Cache,
    ) {
        net.forward(&self.params, feats, drop, out, cache);
    }

    /// Deterministic one-step forecast (dropout off), clamped at zero.
    pub fn predict(&self, window: &Window<'_>) -> Result<DemandMatrix> {
        self.check_window(window)?;
        let n = self.nodes;
        let epoch = window.series().epoch(window.end()) + 1;
        let offdiag = off_diagonal(n);
        let mut values = vec![0.0; n * n];
        match self.kind.net(offdiag.len()) {
            None => {
                let period = self.kind.lags();
                for &od in &offdiag {
                    values[od] = seasonal_value(window, od, period).max(0.0);
                }
            }
            Some(net) => {
                let (feats, scaling) =
                    window_features(&self.normalizer, window, &offdiag, self.kind.lags())?;
                let mut out = vec![0.0; offdiag.len()];
                self.forward(&net, &feats, None, &mut out, &mut Cache::default());
                for (i, &od) in offdiag.iter().enumerate() {
                    values[od] = finite_nonneg(scaling.denormalize(od, out[i]));
                }
            }
        }
        DemandMatrix::new(n, epoch, values)
    }

    /// `passes` stochastic forward passes with dropout active. Pass `k` draws
    /// its masks from the stream `(seed, "mc", k)`.
    pub fn mc_predict(&self, window: &Window<'_>, passes: usize) -> Result<McPrediction> {
        if passes < 2 {
            return Err(Error::Config(format!("MC dropout needs at least 2 passes, got {passes}")));
        }
        self.check_window(window)?;
        let n = self.nodes;
        let epoch = window.series().epoch(window.end()) + 1;
        let offdiag = off_diagonal(n);
        let Some(net) = self.kind.net(offdiag.len()) else {
            let point = self.predict(window)?;
            return Ok(McPrediction {
                epoch,
                mean: point.values().to_vec(),
                std: self.residual_std.clone(),
            });
        };
        let p = offdiag.len();
        let (feats, scaling) = window_features(&self.normalizer, window, &offdiag, self.kind.lags())?;
        let mut samples = vec![0.0; passes * p];
        let mut cache = Cache::default();
        for k in 0..passes {
            let out = &mut samples[k * p..(k + 1) * p];
            if self.dropout > 0.0 {
                let mut r = rng::stream(self.seed, "mc", k as u64);
                self.forward(&net, &feats, Some((&mut r, self.dropout)), out, &mut cache);
            } else {
                self.forward(&net, &feats, None, out, &mut cache);
            }
        }
        let mut mean = vec![0.0; n * n];
        let mut std = vec![0.0; n * n];
        for (i, &od) in offdiag.iter().enumerate() {
            // anchored on the first pass so identical passes reproduce it exactly
            let x0 = samples[i];
            let shift = (0..passes).map(|k| samples[k * p + i] - x0).sum::<f64>() / passes as f64;
            let mu = x0 + shift;
            let var = (0..passes)
                .map(|k| {
                    let d = samples[k * p + i] - mu;
                    d * d
                })
                .sum::<f64>()
                / passes as f64;
            mean[od] = finite_nonneg(scaling.denormalize(od, mu));
            std[od] = math::sqrt(var) * scaling.std[od];
        }
        Ok(McPrediction { epoch, mean, std })
    }
}

fn finite_nonneg(x: f64) -> f64 {
    if x.is_finite() { x.max(0.0) } else { 0.0 }
}
