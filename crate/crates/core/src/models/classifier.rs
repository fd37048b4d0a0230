//! Burst-occurrence forecaster: a logistic model over the binary burst
//! history, trained with L1 loss against 0/1 targets.
//!
//! For OD pair `p` the logit is
//! `Σ_l own_l·x_p(l) + Σ_l cross_l·mean_q x_q(l) + bias_p + bias`,
//! where `l` runs over the last `lags` epochs of the window.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Adam, TrainConfig};
use crate::error::{Error, Result};
use crate::math;
use crate::preprocess::BurstSeries;
use crate::rng;
use crate::series::off_diagonal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Epochs of burst history read; capped at the window length.
    pub lags: usize,
    pub threshold: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { lags: usize::MAX, threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstClassifier {
    pub nodes: usize,
    pub window: usize,
    pub lags: usize,
    pub threshold: f64,
    pub seed: u64,
    pub params: Vec<f64>,
    /// Trained on a history without bursts: always predicts 0.
    pub degenerate: bool,
    #[serde(with = "crate::serde_float")]
    pub best_val_loss: f64,
}

struct Layout {
    p: usize,
    lags: usize,
}

impl Layout {
    fn n_params(&self) -> usize {
        2 * self.lags + self.p + 1
    }
    fn own(&self) -> usize {
        0
    }
    fn cross(&self) -> usize {
        self.lags
    }
    fn od_bias(&self) -> usize {
        2 * self.lags
    }
    fn bias(&self) -> usize {
        2 * self.lags + self.p
    }
}

/// Burst history ending at `end`: `lags × p` indicators (oldest first) and the
/// per-lag cross-OD mean.
fn history(bursts: &BurstSeries, end: usize, lags: usize, offdiag: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let p = offdiag.len();
    let mut own = vec![0.0; lags * p];
    let mut cross = vec![0.0; lags];
    for l in 0..lags {
        let t = end + 1 - lags + l;
        let row = bursts.epoch_row(t);
        let mut sum = 0.0;
        for (i, &od) in offdiag.iter().enumerate() {
            let b = f64::from(row[od]);
            own[l * p + i] = b;
            sum += b;
        }
        cross[l] = sum / p as f64;
    }
    (own, cross)
}

fn logits(params: &[f64], lay: &Layout, own: &[f64], cross: &[f64], out: &mut [f64]) {
    let c: f64 = (0..lay.lags).map(|l| params[lay.cross() + l] * cross[l]).sum::<f64>()
        + params[lay.bias()];
    for i in 0..lay.p {
        let mut z = c + params[lay.od_bias() + i];
        for l in 0..lay.lags {
            z += params[lay.own() + l] * own[l * lay.p + i];
        }
        out[i] = z;
    }
}

impl BurstClassifier {
    /// Fit on a burst history. The same Adam settings, epoch budget and
    /// temporal holdout as the value models apply.
    pub fn train(
        bursts: &BurstSeries,
        cfg: &TrainConfig,
        ccfg: &ClassifierConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.window;
        if bursts.len() < 2 * w {
            return Err(Error::TooShort { needed: 2 * w, have: bursts.len() });
        }
        if !(ccfg.threshold > 0.0 && ccfg.threshold <= 1.0) {
            return Err(Error::Config(format!("threshold {} outside (0, 1]", ccfg.threshold)));
        }
        let n = bursts.nodes();
        let offdiag = off_diagonal(n);
        let lay = Layout { p: offdiag.len(), lags: ccfg.lags.clamp(1, w) };
        let mut model = BurstClassifier {
            nodes: n,
            window: w,
            lags: lay.lags,
            threshold: ccfg.threshold,
            seed,
            params: vec![0.0; lay.n_params()],
            degenerate: false,
            best_val_loss: 0.0,
        };
        if bursts.count() == 0 {
            model.degenerate = true;
            return Ok(model);
        }

        // samples: window ending at s predicts epoch s + 1
        let ends: Vec<usize> = ((w - 1)..(bursts.len() - 1)).collect();
        let hist: Vec<(Vec<f64>, Vec<f64>)> =
            ends.iter().map(|&s| history(bursts, s, lay.lags, &offdiag)).collect();
        let target = |k: usize, i: usize| f64::from(bursts.epoch_row(ends[k] + 1)[offdiag[i]]);
        let total = ends.len();
        let n_val = cfg.validation_samples(total);
        let train_idx: Vec<usize> = (0..total - n_val).collect();
        let val_idx: Vec<usize> = (total - n_val..total).collect();

        let mut z = vec![0.0; lay.p];
        let eval = |params: &[f64], idx: &[usize], z: &mut [f64]| {
            let mut sum = 0.0;
            for &k in idx {
                logits(params, &lay, &hist[k].0, &hist[k].1, z);
                for i in 0..lay.p {
                    sum += (math::sigmoid(z[i]) - target(k, i)).abs();
                }
            }
            sum / (idx.len() * lay.p) as f64
        };

        let mut params = model.params.clone();
        let mut opt = Adam::new(params.len(), cfg.learning_rate, cfg.betas, cfg.weight_decay);
        let mut best = params.clone();
        let mut best_val = eval(&params, &val_idx, &mut z);
        let mut since_best = 0;
        let mut order = train_idx.clone();
        let mut grad = vec![0.0; params.len()];
        for epoch in 1..=cfg.max_epochs {
            order.copy_from_slice(&train_idx);
            order.shuffle(&mut rng::stream(seed, "burst-shuffle", epoch as u64));
            for batch in order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let count = (batch.len() * lay.p) as f64;
                for &k in batch {
                    let (own, cross) = &hist[k];
                    logits(&params, &lay, own, cross, &mut z);
                    let mut dcommon = 0.0;
                    for i in 0..lay.p {
                        let prob = math::sigmoid(z[i]);
                        let e = prob - target(k, i);
                        if e == 0.0 {
                            continue;
                        }
                        let dz = e.signum() * prob * (1.0 - prob) / count;
                        dcommon += dz;
                        grad[lay.od_bias() + i] += dz;
                        for l in 0..lay.lags {
                            grad[lay.own() + l] += dz * own[l * lay.p + i];
                        }
                    }
                    grad[lay.bias()] += dcommon;
                    for l in 0..lay.lags {
                        grad[lay.cross() + l] += dcommon * cross[l];
                    }
                }
                opt.step(&mut params, &grad);
            }
            if params.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    detail: "burst classifier parameters".into(),
                });
            }
            let val = eval(&params, &val_idx, &mut z);
            if val < best_val {
                best_val = val;
                best.copy_from_slice(&params);
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
        model.params = best;
        model.best_val_loss = best_val;
        Ok(model)
    }

    /// Per-cell probability of a burst at epoch `end + 1` (diagonal 0).
    pub fn probabilities(&self, bursts: &BurstSeries, end: usize) -> Result<Vec<f64>> {
        if bursts.nodes() != self.nodes {
            return Err(Error::NodeMismatch { expected: self.nodes, got: bursts.nodes() });
        }
        if end + 1 < self.window || end >= bursts.len() {
            return Err(Error::WindowBounds { end, len: self.window, epochs: bursts.len() });
        }
        let n = self.nodes;
        let mut probs = vec![0.0; n * n];
        if self.degenerate {
            return Ok(probs);
        }
        let offdiag = off_diagonal(n);
        let lay = Layout { p: offdiag.len(), lags: self.lags };
        let (own, cross) = history(bursts, end, lay.lags, &offdiag);
        let mut z = vec![0.0; lay.p];
        logits(&self.params, &lay, &own, &cross, &mut z);
        for (i, &od) in offdiag.iter().enumerate() {
            probs[od] = math::sigmoid(z[i]);
        }
        Ok(probs)
    }

    /// `b^{t+1}`: 1 where the probability reaches the threshold.
    pub fn classify(&self, bursts: &BurstSeries, end: usize) -> Result<Vec<u8>> {
        Ok(self
            .probabilities(bursts, end)?
            .into_iter()
            .map(|p| u8::from(decide(p, self.threshold)))
            .collect())
    }
}

/// Threshold rule; a tie counts as a burst.
pub fn decide(probability: f64, threshold: f64) -> bool {
    probability >= threshold
}
