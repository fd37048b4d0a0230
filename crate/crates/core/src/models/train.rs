use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::nets::{Cache, Net};
use super::{Adam, Forecaster, ModelKind, ModelSpec, seasonal_value, window_features};
use crate::error::{Error, Result};
use crate::math;
use crate::preprocess::{ImputeScope, MIN_BURST_WINDOW, NonBurstSeries, Normalizer, Scaling};
use crate::rng;
use crate::series::{DmSeries, off_diagonal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Validation {
    /// The last `fraction` of training samples, in time order.
    Holdout { fraction: f64 },
    /// Forward-chaining folds: fold `f` trains on blocks `< f` and validates
    /// on block `f`. Picks the epoch count, then refits on everything.
    KFold { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub betas: (f64, f64),
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub validation: Validation,
    pub window: usize,
    pub batch_size: usize,
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.002,
            betas: (0.9, 0.98),
            weight_decay: 1e-5,
            max_epochs: 100,
            validation: Validation::Holdout { fraction: 0.1 },
            window: 128,
            batch_size: 32,
            patience: 10,
        }
    }
}

impl TrainConfig {
    /// Number of trailing samples held out from `total` (at least one each side).
    pub fn validation_samples(&self, total: usize) -> usize {
        match self.validation {
            Validation::Holdout { fraction } => {
                (libm::ceil(total as f64 * fraction) as usize).clamp(1, total.saturating_sub(1).max(1))
            }
            Validation::KFold { k } => (total / k).max(1),
        }
    }

    /// Window ends of the validation samples of an `epochs`-long series.
    pub fn validation_ends(&self, epochs: usize) -> Vec<usize> {
        let w = self.window;
        if epochs <= w {
            return Vec::new();
        }
        let total = epochs - w;
        let n_val = self.validation_samples(total);
        (total - n_val..total).map(|s| w - 1 + s).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < MIN_BURST_WINDOW {
            return Err(Error::Config(format!(
                "window {} is below the minimum of {MIN_BURST_WINDOW}",
                self.window
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and max epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        match self.validation {
            Validation::Holdout { fraction } if !(fraction > 0.0 && fraction < 1.0) => {
                Err(Error::Config(format!("holdout fraction {fraction} outside (0, 1)")))
            }
            Validation::KFold { k } if k < 2 => Err(Error::Config("k-fold needs k >= 2".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    /// 0 means the initial parameters were never beaten.
    pub best_epoch: usize,
    #[serde(with = "crate::serde_float")]
    pub best_val_loss: f64,
    pub train_samples: usize,
    pub val_samples: usize,
}

/// Masked mean absolute error of `kind` (dropout off) and its gradient with
/// respect to the parameters. `inputs` is `lags × p`, `targets` and `mask`
/// have length `p`; masked targets never contribute.
pub fn masked_l1_with_grad(
    kind: ModelKind,
    p: usize,
    params: &[f64],
    inputs: &[f64],
    targets: &[f64],
    mask: &[bool],
) -> Result<(f64, Vec<f64>)> {
    let net = kind
        .net(p)
        .ok_or_else(|| Error::Config(format!("{kind} has no trainable parameters")))?;
    if params.len() != net.n_params() || inputs.len() != net.inputs() || targets.len() != p {
        return Err(Error::Config("parameter, input or target length mismatch".into()));
    }
    let mut out = vec![0.0; p];
    let mut cache = Cache::default();
    net.forward(params, inputs, None, &mut out, &mut cache);
    let count = mask.iter().filter(|&&m| m).count();
    let mut grad = vec![0.0; params.len()];
    if count == 0 {
        return Ok((0.0, grad));
    }
    let mut dout = vec![0.0; p];
    let mut loss = 0.0;
    for i in 0..p {
        if mask[i] {
            let e = out[i] - targets[i];
            loss += e.abs();
            dout[i] = sign(e) / count as f64;
        }
    }
    net.backward(params, inputs, &cache, &dout, &mut grad);
    Ok((loss / count as f64, grad))
}

impl ModelKind {
    /// Number of input values (`lags × p`) for `p` OD pairs.
    pub fn input_len(&self, p: usize) -> usize {
        self.lags() * p
    }

    /// Freshly initialised parameters for `p` OD pairs.
    pub fn init_params(&self, p: usize, seed: u64) -> Vec<f64> {
        match self.net(p) {
            Some(net) => net.init(&mut rng::stream(seed, "init", 0)),
            None => Vec::new(),
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Pre-extracted training samples.
struct Samples {
    p: usize,
    lags: usize,
    feats: Vec<f64>,
    /// Normalized targets, `NaN` where masked.
    targets: Vec<f64>,
    ends: Vec<usize>,
    scalings: Vec<Scaling>,
}

impl Samples {
    fn len(&self) -> usize {
        self.ends.len()
    }

    fn feat(&self, s: usize) -> &[f64] {
        &self.feats[s * self.lags * self.p..(s + 1) * self.lags * self.p]
    }

    fn target(&self, s: usize) -> &[f64] {
        &self.targets[s * self.p..(s + 1) * self.p]
    }

    fn build(
        inputs: &DmSeries,
        targets: &DmSeries,
        normalizer: &Normalizer,
        w: usize,
        lags: usize,
    ) -> Result<Self> {
        let offdiag = off_diagonal(inputs.nodes());
        let p = offdiag.len();
        let n = inputs.len() - w;
        let mut out = Samples {
            p,
            lags,
            feats: Vec::with_capacity(n * lags * p),
            targets: Vec::with_capacity(n * p),
            ends: Vec::with_capacity(n),
            scalings: Vec::with_capacity(n),
        };
        for s in (w - 1)..(inputs.len() - 1) {
            let window = inputs.window_at(s, w)?;
            let (f, scaling) = window_features(normalizer, &window, &offdiag, lags)?;
            out.feats.extend_from_slice(&f);
            for &od in &offdiag {
                out.targets.push(match targets.get(s + 1, od) {
                    Some(x) => scaling.normalize(od, x),
                    None => f64::NAN,
                });
            }
            out.ends.push(s);
            out.scalings.push(scaling);
        }
        Ok(out)
    }
}

fn eval_loss(net: &Net, params: &[f64], samples: &Samples, idx: &[usize]) -> f64 {
    let mut out = vec![0.0; samples.p];
    let mut cache = Cache::default();
    let (mut sum, mut count) = (0.0, 0usize);
    for &s in idx {
        net.forward(params, samples.feat(s), None, &mut out, &mut cache);
        for (o, &t) in out.iter().zip(samples.target(s)) {
            if !t.is_nan() {
                sum += (o - t).abs();
                count += 1;
            }
        }
    }
    if count == 0 { f64::INFINITY } else { sum / count as f64 }
}

struct RunResult {
    params: Vec<f64>,
    curve: Vec<f64>,
    best_epoch: usize,
    best_val: f64,
    epochs_run: usize,
}

/// Mini-batch Adam on masked L1. With `val` empty the final parameters are
/// returned after exactly `epochs` epochs.
fn run(
    net: &Net,
    samples: &Samples,
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &TrainConfig,
    epochs: usize,
    dropout: f64,
    seed: u64,
) -> Result<RunResult> {
    let mut params = net.init(&mut rng::stream(seed, "init", 0));
    let mut opt = Adam::new(params.len(), cfg.learning_rate, cfg.betas, cfg.weight_decay);
    let p = samples.p;
    let mut out = vec![0.0; p];
    let mut dout = vec![0.0; p];
    let mut grad = vec![0.0; params.len()];
    let mut cache = Cache::default();
    let checkpointing = !val_idx.is_empty();
    let mut best_val = if checkpointing { eval_loss(net, &params, samples, val_idx) } else { f64::INFINITY };
    let mut best = params.clone();
    let mut best_epoch = 0;
    let mut curve = Vec::new();
    let mut since_best = 0;
    let mut order = train_idx.to_vec();
    let mut epochs_run = 0;

    for epoch in 1..=epochs {
        epochs_run = epoch;
        order.copy_from_slice(train_idx);
        order.shuffle(&mut rng::stream(seed, "shuffle", epoch as u64));
        let mut drop_rng = rng::stream(seed, "dropout", epoch as u64);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let count: usize = batch
                .iter()
                .map(|&s| samples.target(s).iter().filter(|t| !t.is_nan()).count())
                .sum();
            if count == 0 {
                continue;
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &s in batch {
                let x = samples.feat(s);
                net.forward(&params, x, Some((&mut drop_rng, dropout)), &mut out, &mut cache);
                for ((d, o), &t) in dout.iter_mut().zip(&out).zip(samples.target(s)) {
                    *d = if t.is_nan() {
                        0.0
                    } else {
                        let e = o - t;
                        epoch_loss += e.abs() / count as f64;
                        sign(e) / count as f64
                    };
                }
                net.backward(&params, x, &cache, &dout, &mut grad);
            }
            opt.step(&mut params, &grad);
        }
        if !epoch_loss.is_finite() || params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                detail: format!("batch loss sum {epoch_loss}"),
            });
        }
        if checkpointing {
            let val = eval_loss(net, &params, samples, val_idx);
            curve.push(val);
            if val < best_val {
                best_val = val;
                best.copy_from_slice(&params);
                best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }
    }
    if !checkpointing {
        best = params;
        best_epoch = epochs_run;
    }
    Ok(RunResult { params: best, curve, best_epoch, best_val, epochs_run })
}

fn residual_std(
    inputs: &DmSeries,
    targets: &DmSeries,
    ends: &[usize],
    mut predict: impl FnMut(usize) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let n = inputs.nodes();
    let mut sum = vec![0.0; n * n];
    let mut sq = vec![0.0; n * n];
    let mut cnt = vec![0usize; n * n];
    for &s in ends {
        let pred = predict(s)?;
        for od in off_diagonal(n) {
            if let Some(y) = targets.get(s + 1, od) {
                let r = y - pred[od];
                sum[od] += r;
                sq[od] += r * r;
                cnt[od] += 1;
            }
        }
    }
    Ok((0..n * n)
        .map(|od| {
            if cnt[od] == 0 {
                0.0
            } else {
                let m = sum[od] / cnt[od] as f64;
                math::sqrt((sq[od] / cnt[od] as f64 - m * m).max(0.0))
            }
        })
        .collect())
}

impl Forecaster {
    /// Train one pool member on clipped training data. Inputs see
    /// zero-imputed missing values; the loss skips missing and clipped targets.
    pub fn train(
        spec: &ModelSpec,
        data: &NonBurstSeries,
        normalizer: &Normalizer,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.window;
        let targets = data.series();
        let inputs = data.zero_impute(ImputeScope::MissingOnly);
        if inputs.len() < 2 * w {
            return Err(Error::TooShort { needed: 2 * w, have: inputs.len() });
        }
        if spec.kind.lags() == 0 || spec.kind.lags() > w {
            return Err(Error::Config(format!(
                "{} reads {} epochs but the window is {w}",
                spec.kind,
                spec.kind.lags()
            )));
        }
        if !(0.0..1.0).contains(&spec.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", spec.dropout)));
        }
        let n = inputs.nodes();
        let total = inputs.len() - w;
        let n_val = cfg.validation_samples(total);
        let train_idx: Vec<usize> = (0..total - n_val).collect();
        let val_idx: Vec<usize> = (total - n_val..total).collect();
        let val_ends = cfg.validation_ends(inputs.len());

        let mut model = Forecaster {
            model_id: spec.model_id(),
            kind: spec.kind,
            nodes: n,
            window: w,
            dropout: spec.dropout,
            seed,
            normalizer: normalizer.clone(),
            params: Vec::new(),
            residual_std: vec![0.0; n * n],
            summary: TrainSummary {
                train_samples: train_idx.len(),
                val_samples: val_idx.len(),
                ..Default::default()
            },
        };

        let Some(net) = spec.kind.net(off_diagonal(n).len()) else {
            let period = spec.kind.lags();
            model.residual_std = residual_std(&inputs, targets, &val_ends, |s| {
                let window = inputs.window_at(s, w)?;
                let mut v = vec![0.0; n * n];
                for od in off_diagonal(n) {
                    v[od] = seasonal_value(&window, od, period);
                }
                Ok(v)
            })?;
            return Ok(model);
        };

        let samples = Samples::build(&inputs, targets, normalizer, w, spec.kind.lags())?;
        let result = match cfg.validation {
            Validation::Holdout { .. } => {
                run(&net, &samples, &train_idx, &val_idx, cfg, cfg.max_epochs, spec.dropout, seed)?
            }
            Validation::KFold { k } => {
                let block = (samples.len() / k).max(1);
                let mut mean_curve = vec![0.0; cfg.max_epochs];
                let mut folds = 0;
                for f in 1..k {
                    let (lo, hi) = (f * block, ((f + 1) * block).min(samples.len()));
                    if lo >= hi {
                        break;
                    }
                    let tr: Vec<usize> = (0..lo).collect();
                    let va: Vec<usize> = (lo..hi).collect();
                    let fold_cfg = TrainConfig { patience: usize::MAX, ..cfg.clone() };
                    let fold_seed = rng::derive(seed, "fold", f as u64);
                    let r = run(&net, &samples, &tr, &va, &fold_cfg, cfg.max_epochs, spec.dropout, fold_seed)?;
                    for (m, v) in mean_curve.iter_mut().zip(&r.curve) {
                        *m += v;
                    }
                    folds += 1;
                }
                let best_epochs = if folds == 0 {
                    cfg.max_epochs
                } else {
                    1 + mean_curve
                        .iter()
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(b.1))
                        .map(|(e, _)| e)
                        .unwrap_or(0)
                };
                let all: Vec<usize> = (0..samples.len()).collect();
                let mut r = run(&net, &samples, &all, &[], cfg, best_epochs, spec.dropout, seed)?;
                r.best_val = eval_loss(&net, &r.params, &samples, &val_idx);
                r
            }
        };
        model.params = result.params;
        model.summary.epochs_run = result.epochs_run;
        model.summary.best_epoch = result.best_epoch;
        model.summary.best_val_loss = result.best_val;
        let p = samples.p;
        let mut out = vec![0.0; p];
        let mut cache = Cache::default();
        let offdiag = off_diagonal(n);
        model.residual_std = residual_std(&inputs, targets, &val_ends, |s| {
            let si = s + 1 - w;
            net.forward(&model.params, samples.feat(si), None, &mut out, &mut cache);
            let mut v = vec![0.0; n * n];
            for (i, &od) in offdiag.iter().enumerate() {
                v[od] = samples.scalings[si].denormalize(od, out[i]);
            }
            Ok(v)
        })?;
        Ok(model)
    }
}
