//! Distribution calibration and per-window model selection.
//!
//! Each model gets an affine map `σ̂ = a·σ + b`, `μ̂ = max(μ + c, 0)` fitted
//! by Gaussian negative log-likelihood on validation predictions. The
//! selector runs MC dropout for every pool member, calibrates, and keeps the
//! member with the smallest mean σ̂.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::models::{Forecaster, McPrediction};
use crate::series::{DemandMatrix, DmSeries, Window, off_diagonal};

pub const SIGMA_FLOOR: f64 = 1e-8;
pub const MIN_CALIBRATION_SAMPLES: usize = 50;
pub const MIN_CORRELATION_WINDOWS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Calibration {
    pub const IDENTITY: Calibration = Calibration { a: 1.0, b: 0.0, c: 0.0 };

    pub fn sigma(&self, sigma: f64) -> f64 {
        (self.a * sigma + self.b).max(SIGMA_FLOOR)
    }

    pub fn mean(&self, mu: f64) -> f64 {
        (mu + self.c).max(0.0)
    }
}

/// Calibration per model, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub models: Vec<(String, Calibration)>,
}

impl CalibrationMap {
    pub fn get(&self, model_id: &str) -> Option<&Calibration> {
        self.models.iter().find(|(id, _)| id == model_id).map(|(_, c)| c)
    }

    pub fn insert(&mut self, model_id: &str, cal: Calibration) {
        match self.models.iter_mut().find(|(id, _)| id == model_id) {
            Some(slot) => slot.1 = cal,
            None => self.models.push((String::from(model_id), cal)),
        }
    }

    /// Identity map for every model, used when calibration is switched off.
    pub fn identity<'a>(ids: impl IntoIterator<Item = &'a str>) -> Self {
        let mut map = Self::default();
        for id in ids {
            map.insert(id, Calibration::IDENTITY);
        }
        map
    }
}

/// One validation prediction for one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub mu: f64,
    pub sigma: f64,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedPrediction {
    pub epoch: usize,
    pub model_id: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScore {
    pub model_id: String,
    #[serde(with = "crate::serde_float")]
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub epoch: usize,
    pub chosen: String,
    pub chosen_index: usize,
    pub scores: Vec<ModelScore>,
}

fn nll(samples: &[CalibrationSample], cal: &Calibration) -> f64 {
    let mut sum = 0.0;
    for s in samples {
        let sd = cal.sigma(s.sigma);
        let r = s.truth - cal.mean(s.mu);
        sum += math::ln(sd) + r * r / (2.0 * sd * sd);
    }
    sum / samples.len() as f64
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut ss, mut n) = (0.0, 0usize);
    for x in xs {
        ss += x * x;
        n += 1;
    }
    if n == 0 { 0.0 } else { math::sqrt(ss / n as f64) }
}

/// Best `(a, b)` for a fixed mean offset `c`: log-spaced grid, then a
/// multiplicative pattern search.
fn fit_scale(samples: &[CalibrationSample], c: f64, varying: bool) -> (Calibration, f64) {
    let resid = rms(samples.iter().map(|s| s.truth - (s.mu + c).max(0.0))).max(SIGMA_FLOOR);
    if !varying {
        let cal = Calibration { a: 0.0, b: resid, c };
        return (cal, nll(samples, &cal));
    }
    let sig = rms(samples.iter().map(|s| s.sigma)).max(SIGMA_FLOOR);
    let a0 = resid / sig;
    let mut best = Calibration { a: a0, b: 0.0, c };
    let mut best_nll = nll(samples, &best);
    let a_grid = core::iter::once(0.0).chain((-12..=12).map(|k| a0 * math::powf(2.0, k as f64 / 2.0)));
    for a in a_grid {
        let b_grid = core::iter::once(0.0).chain((-16..=4).map(|k| resid * math::powf(2.0, k as f64 / 2.0)));
        for b in b_grid {
            if a == 0.0 && b == 0.0 {
                continue;
            }
            let cal = Calibration { a, b, c };
            let v = nll(samples, &cal);
            if v < best_nll {
                best = cal;
                best_nll = v;
            }
        }
    }
    let mut step = 0.35;
    while step > 1e-4 {
        let up = math::exp(step);
        let mut moved = false;
        let mut candidates = vec![
            Calibration { a: best.a * up, ..best },
            Calibration { a: best.a / up, ..best },
        ];
        if best.b > 0.0 {
            candidates.push(Calibration { b: best.b * up, ..best });
            candidates.push(Calibration { b: best.b / up, ..best });
        } else {
            candidates.push(Calibration { b: resid * 1e-4, ..best });
        }
        if best.a == 0.0 {
            candidates.push(Calibration { a: a0 * 1e-4, ..best });
        }
        for cal in candidates {
            if cal.a == 0.0 && cal.b == 0.0 {
                continue;
            }
            let v = nll(samples, &cal);
            if v < best_nll {
                best = cal;
                best_nll = v;
                moved = true;
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    (best, best_nll)
}

/// Minimize a unimodal-ish function of `c` on `[lo, hi]` by golden section.
fn golden(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = (math::sqrt(5.0) - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..80 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    (lo + hi) / 2.0
}

/// Fit one model's map. A model whose σ never varies (e.g. all zero) gets
/// `a = 0` and `b` equal to the residual scale. The mean offset is kept only
/// when it pays for its extra parameter (BIC).
pub fn fit_model_calibration(samples: &[CalibrationSample]) -> Result<Calibration> {
    if samples.len() < MIN_CALIBRATION_SAMPLES {
        return Err(Error::Calibration(format!(
            "{} validation samples, need at least {MIN_CALIBRATION_SAMPLES}",
            samples.len()
        )));
    }
    if samples.iter().any(|s| !(s.mu.is_finite() && s.sigma.is_finite() && s.truth.is_finite()) || s.sigma < 0.0) {
        return Err(Error::Calibration("non-finite or negative validation sample".into()));
    }
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.sigma), h.max(s.sigma)));
    let varying = hi - lo > 1e-12 * hi.max(1.0);
    let (base, base_nll) = fit_scale(samples, 0.0, varying);

    let spread = rms(samples.iter().map(|s| s.truth - s.mu)).max(SIGMA_FLOOR);
    let c = golden(-2.0 * spread, 2.0 * spread, |c| nll(samples, &Calibration { c, ..base }));
    let (shifted, shifted_nll) = fit_scale(samples, c, varying);
    let n = samples.len() as f64;
    if n * (base_nll - shifted_nll) > 0.5 * math::ln(n) {
        Ok(shifted)
    } else {
        Ok(base)
    }
}

/// Fit every model in order.
pub fn fit_calibration(per_model: &[(String, Vec<CalibrationSample>)]) -> Result<CalibrationMap> {
    let mut map = CalibrationMap::default();
    for (id, samples) in per_model {
        let cal = fit_model_calibration(samples)
            .map_err(|e| Error::Calibration(format!("{id}: {e}")))?;
        map.insert(id, cal);
    }
    Ok(map)
}

/// Validation samples of one model: every present off-diagonal target at
/// `end + 1` for each window end. `inputs` is what the model reads and
/// `targets` the (clipped) values it is scored on.
pub fn calibration_samples(
    model: &Forecaster,
    inputs: &DmSeries,
    targets: &DmSeries,
    ends: &[usize],
    passes: usize,
) -> Result<Vec<CalibrationSample>> {
    let offdiag = off_diagonal(inputs.nodes());
    let mut out = Vec::new();
    for &end in ends {
        let window = inputs.window_at(end, model.window)?;
        let pred = model.mc_predict(&window, passes).map_err(|e| e.at_epoch(end + 1))?;
        for &od in &offdiag {
            if let Some(y) = targets.get(end + 1, od) {
                out.push(CalibrationSample { mu: pred.mean[od], sigma: pred.std[od], truth: y });
            }
        }
    }
    Ok(out)
}

pub fn calibrate(pred: &McPrediction, map: &CalibrationMap, model_id: &str) -> Result<CalibratedPrediction> {
    let cal = map.get(model_id).ok_or_else(|| Error::UnknownModel(String::from(model_id)))?;
    let n2 = pred.mean.len();
    let nodes = n2.isqrt();
    let mut mean: Vec<f64> = pred.mean.iter().map(|&m| cal.mean(m)).collect();
    for i in 0..nodes {
        mean[i * nodes + i] = 0.0;
    }
    Ok(CalibratedPrediction {
        epoch: pred.epoch,
        model_id: String::from(model_id),
        mean,
        std: pred.std.iter().map(|&s| cal.sigma(s)).collect(),
    })
}

/// Index of the smallest score; the earlier entry wins ties and NaN never wins.
pub fn argmin(scores: &[f64]) -> Option<usize> {
    let key = |s: f64| if s.is_nan() { f64::INFINITY } else { s };
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if best.is_none_or(|b| key(s) < key(scores[b])) {
            best = Some(i);
        }
    }
    best
}

/// Pick the member with the smallest mean calibrated σ over `cells` and
/// return its calibrated prediction.
pub fn select_model_over(
    pool: &[Forecaster],
    map: &CalibrationMap,
    window: &Window<'_>,
    passes: usize,
    cells: &[usize],
) -> Result<(SelectionRecord, CalibratedPrediction)> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut preds = Vec::with_capacity(pool.len());
    let mut scores = Vec::with_capacity(pool.len());
    for model in pool {
        let cp = calibrate(&model.mc_predict(window, passes)?, map, &model.model_id)?;
        let score = if cells.is_empty() {
            0.0
        } else {
            cells.iter().map(|&od| cp.std[od]).sum::<f64>() / cells.len() as f64
        };
        scores.push(score);
        preds.push(cp);
    }
    let idx = argmin(&scores).unwrap_or(0);
    let record = SelectionRecord {
        epoch: preds[idx].epoch,
        chosen: pool[idx].model_id.clone(),
        chosen_index: idx,
        scores: pool
            .iter()
            .zip(&scores)
            .map(|(m, &score)| ModelScore { model_id: m.model_id.clone(), score })
            .collect(),
    };
    Ok((record, preds.swap_remove(idx)))
}

/// Selection scored over every off-diagonal cell.
pub fn select_model(
    pool: &[Forecaster],
    map: &CalibrationMap,
    window: &Window<'_>,
    passes: usize,
) -> Result<(SelectionRecord, CalibratedPrediction)> {
    select_model_over(pool, map, window, passes, &off_diagonal(window.nodes()))
}

/// Unweighted mean of the members' deterministic forecasts.
pub fn ensemble_predict(pool: &[Forecaster], window: &Window<'_>) -> Result<DemandMatrix> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    let mut acc: Option<(usize, Vec<f64>)> = None;
    for model in pool {
        let p = model.predict(window)?;
        match &mut acc {
            None => acc = Some((p.epoch, p.values().to_vec())),
            Some((_, sum)) => sum.iter_mut().zip(p.values()).for_each(|(s, v)| *s += v),
        }
    }
    let (epoch, mut sum) = acc.expect("pool is non-empty");
    let k = pool.len() as f64;
    sum.iter_mut().for_each(|s| *s /= k);
    DemandMatrix::new(window.nodes(), epoch, sum)
}

/// Per-window error and mean uncertainty of one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowUncertainty {
    pub mae: f64,
    pub sigma: f64,
    pub sigma_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEntry {
    pub model_id: String,
    pub windows: usize,
    /// `None` when either series has zero variance.
    pub r_raw: Option<f64>,
    pub r_calibrated: Option<f64>,
}

/// Pearson r between per-window MAE and mean σ, before and after calibration.
pub fn correlation_report(per_model: &[(String, Vec<WindowUncertainty>)]) -> Result<Vec<CorrelationEntry>> {
    per_model
        .iter()
        .map(|(id, rows)| {
            if rows.len() < MIN_CORRELATION_WINDOWS {
                return Err(Error::Calibration(format!(
                    "{id}: {} test windows, need at least {MIN_CORRELATION_WINDOWS}",
                    rows.len()
                )));
            }
            let mae: Vec<f64> = rows.iter().map(|r| r.mae).collect();
            let raw: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
            let cal: Vec<f64> = rows.iter().map(|r| r.sigma_hat).collect();
            Ok(CorrelationEntry {
                model_id: id.clone(),
                windows: rows.len(),
                r_raw: math::pearson(&mae, &raw),
                r_calibrated: math::pearson(&mae, &cal),
            })
        })
        .collect()
}

/// Summarize one prediction against the truth at its epoch over `cells`;
/// masked truth is skipped. `None` when nothing is evaluable.
pub fn window_uncertainty(
    raw: &McPrediction,
    calibrated: &CalibratedPrediction,
    truth: &[f64],
    cells: &[usize],
) -> Option<WindowUncertainty> {
    let (mut err, mut sig, mut sig_hat, mut n) = (0.0, 0.0, 0.0, 0usize);
    for &od in cells {
        let y = truth[od];
        if y.is_nan() {
            continue;
        }
        err += (calibrated.mean[od] - y).abs();
        sig += raw.std[od];
        sig_hat += calibrated.std[od];
        n += 1;
    }
    (n > 0).then(|| {
        let k = n as f64;
        WindowUncertainty { mae: err / k, sigma: sig / k, sigma_hat: sig_hat / k }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn calibrate_arithmetic() {
        let pred = McPrediction { epoch: 3, mean: vec![0.0, 3.0, 3.0, 0.0], std: vec![0.0, 0.2, 0.2, 0.0] };
        let mut map = CalibrationMap::default();
        map.insert("m", Calibration::IDENTITY);
        let out = calibrate(&pred, &map, "m").unwrap();
        assert_eq!(out.mean, pred.mean);
        assert_eq!(out.std[1], 0.2);
        map.insert("m", Calibration { a: 2.0, b: 0.1, c: -5.0 });
        let out = calibrate(&pred, &map, "m").unwrap();
        assert!((out.std[1] - 0.5).abs() < 1e-15);
        assert_eq!(out.mean[1], 0.0);
        assert!(out.std.iter().all(|&s| s > 0.0));
        assert!(matches!(calibrate(&pred, &map, "x"), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn argmin_ties_and_nan() {
        assert_eq!(argmin(&[0.5, 0.2, 0.9]), Some(1));
        assert_eq!(argmin(&[0.3, 0.3]), Some(0));
        assert_eq!(argmin(&[f64::NAN, 0.3]), Some(1));
        assert_eq!(argmin(&[]), None);
    }

    #[test]
    fn too_few_samples() {
        let s = vec![CalibrationSample { mu: 1.0, sigma: 1.0, truth: 1.0 }; 10];
        assert!(fit_model_calibration(&s).is_err());
    }
}
