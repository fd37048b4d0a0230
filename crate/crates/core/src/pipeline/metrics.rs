use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{ForecastOutcome, Source};
use crate::error::{Error, Result};
use crate::math;
use crate::preprocess::BurstDetector;
use crate::series::{DmSeries, off_diagonal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRatio {
    pub model_id: String,
    pub count: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Mean absolute error over forecast cells with a measured truth (Mbps).
    pub mae: Option<f64>,
    pub evaluated_positions: usize,
    pub forecast_epochs: usize,
    pub fallback_positions: usize,
    /// Per-pair MAE, ascending.
    pub per_od_mae: Vec<f64>,
    /// Pairs without a single evaluable position.
    pub excluded_pairs: usize,
    pub burst_accuracy: Option<f64>,
    pub identification_rate: Option<f64>,
    pub classified_positions: usize,
    pub actual_bursts: usize,
    pub selection_ratios: Vec<SelectionRatio>,
}

fn truth_index(truth: &DmSeries, o: &ForecastOutcome) -> Result<usize> {
    if o.nodes != truth.nodes() {
        return Err(Error::NodeMismatch { expected: truth.nodes(), got: o.nodes });
    }
    o.epoch
        .checked_sub(truth.first_epoch())
        .filter(|&t| t < truth.len())
        .ok_or_else(|| Error::Misaligned(format!("outcome epoch {} not in the truth series", o.epoch)))
}

/// Overall accuracy and identification rate (recall on bursts) of 0/1
/// predictions. Either is `None` when undefined.
pub fn burst_scores(targets: &[u8], predictions: &[u8]) -> (Option<f64>, Option<f64>) {
    let n = targets.len().min(predictions.len());
    let (mut correct, mut positives, mut hits) = (0usize, 0usize, 0usize);
    for k in 0..n {
        let (y, p) = (targets[k] == 1, predictions[k] == 1);
        correct += usize::from(y == p);
        positives += usize::from(y);
        hits += usize::from(y && p);
    }
    let acc = (n > 0).then(|| correct as f64 / n as f64);
    let rate = (positives > 0).then(|| hits as f64 / positives as f64);
    (acc, rate)
}

/// Sum and count of absolute errors per cell over forecast positions with a
/// measured truth.
fn per_cell_errors(outcomes: &[ForecastOutcome], truth: &DmSeries) -> Result<(Vec<f64>, Vec<usize>)> {
    let n = truth.nodes();
    let mut sum = vec![0.0; n * n];
    let mut cnt = vec![0usize; n * n];
    for o in outcomes {
        let t = truth_index(truth, o)?;
        for od in off_diagonal(n) {
            if o.sources[od] != Source::Forecast {
                continue;
            }
            if let Some(y) = truth.get(t, od) {
                sum[od] += (o.values[od] - y).abs();
                cnt[od] += 1;
            }
        }
    }
    Ok((sum, cnt))
}

/// One MAE per pair, ascending, and the number of pairs left out for lack
/// of evaluable positions.
pub fn per_od_mae_cdf(outcomes: &[ForecastOutcome], truth: &DmSeries) -> Result<(Vec<f64>, usize)> {
    let (sum, cnt) = per_cell_errors(outcomes, truth)?;
    let mut maes = Vec::new();
    let mut excluded = 0;
    for od in off_diagonal(truth.nodes()) {
        if cnt[od] == 0 {
            excluded += 1;
        } else {
            maes.push(sum[od] / cnt[od] as f64);
        }
    }
    math::sort_f64(&mut maes);
    Ok((maes, excluded))
}

/// Score outcomes against the measured series. Actual bursts are the
/// detector's labels on `truth` with window `w`.
pub fn evaluate(
    outcomes: &[ForecastOutcome],
    truth: &DmSeries,
    w: usize,
    detector: &BurstDetector,
) -> Result<MetricsReport> {
    let n = truth.nodes();
    let (sum, cnt) = per_cell_errors(outcomes, truth)?;
    let evaluated: usize = cnt.iter().sum();
    let mae = (evaluated > 0).then(|| sum.iter().sum::<f64>() / evaluated as f64);
    let (per_od_mae, excluded_pairs) = per_od_mae_cdf(outcomes, truth)?;

    let mut targets = Vec::new();
    let mut preds = Vec::new();
    let mut fallback_positions = 0;
    let mut ratios: Vec<SelectionRatio> = Vec::new();
    let mut forecast_epochs = 0;
    for o in outcomes {
        let t = truth_index(truth, o)?;
        fallback_positions += o.sources.iter().filter(|&&s| s == Source::Fallback).count();
        let (actual, _) = detector.classify_epoch(truth, t, w);
        if t + 1 >= w {
            for od in off_diagonal(n) {
                if truth.is_present(t, od) {
                    targets.push(actual[od]);
                    preds.push(o.bursts[od]);
                }
            }
        }
        if let Some(sel) = &o.selection {
            forecast_epochs += 1;
            for s in &sel.scores {
                if !ratios.iter().any(|r| r.model_id == s.model_id) {
                    ratios.push(SelectionRatio { model_id: s.model_id.clone(), count: 0, ratio: 0.0 });
                }
            }
            if let Some(r) = ratios.iter_mut().find(|r| r.model_id == sel.chosen) {
                r.count += 1;
            }
        }
    }
    for r in &mut ratios {
        r.ratio = if forecast_epochs > 0 { r.count as f64 / forecast_epochs as f64 } else { 0.0 };
    }
    let (burst_accuracy, identification_rate) = burst_scores(&targets, &preds);
    Ok(MetricsReport {
        mae,
        evaluated_positions: evaluated,
        forecast_epochs,
        fallback_positions,
        per_od_mae,
        excluded_pairs,
        burst_accuracy,
        identification_rate,
        classified_positions: targets.len(),
        actual_bursts: targets.iter().filter(|&&b| b == 1).count(),
        selection_ratios: ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_hand_count() {
        let (acc, rate) = burst_scores(&[1, 0, 1, 1], &[1, 0, 0, 1]);
        assert_eq!(acc, Some(0.75));
        assert!((rate.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(burst_scores(&[0, 0], &[0, 1]).1, None);
    }
}
