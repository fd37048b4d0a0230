use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::TrainedPool;
use crate::error::{Error, Result};
use crate::models::DEFAULT_MC_PASSES;
use crate::preprocess::{BurstDetector, BurstSeries};
use crate::selection::{
    SelectionRecord, WindowUncertainty, calibrate, ensemble_predict, select_model_over, window_uncertainty,
};
use crate::series::{DemandMatrix, DmSeries, off_diagonal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Forecast,
    Fallback,
}

/// The decision for one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastOutcome {
    /// Epoch being forecast (`t + 1`).
    pub epoch: usize,
    pub nodes: usize,
    /// One source per cell; the diagonal is a zero forecast.
    pub sources: Vec<Source>,
    /// Forecast value, or the stand-in measurement on fallback cells.
    pub values: Vec<f64>,
    /// Forecast burst indicators.
    pub bursts: Vec<u8>,
    /// Present only when the selector ran.
    pub selection: Option<SelectionRecord>,
}

impl ForecastOutcome {
    pub fn chosen(&self) -> Option<&str> {
        self.selection.as_ref().map(|s| s.chosen.as_str())
    }

    /// The demand matrix a proactive application would act on.
    pub fn effective_demand(&self) -> Result<DemandMatrix> {
        DemandMatrix::new(self.nodes, self.epoch, self.values.clone())
    }
}

/// How forecast cells get their value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", content = "member", rename_all = "kebab-case")]
pub enum Strategy {
    /// Smallest calibrated uncertainty per window.
    Tubo,
    /// Always the given pool member's deterministic forecast.
    Single(usize),
    /// Mean of all members' deterministic forecasts.
    Ensemble,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnlineConfig {
    pub strategy: Strategy,
    /// Fall back to measurements on pairs forecast to burst.
    pub gating: bool,
    pub passes: usize,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self { strategy: Strategy::Tubo, gating: true, passes: DEFAULT_MC_PASSES }
    }
}

/// Growing view of the measured history.
struct History {
    raw: DmSeries,
    /// What the value models read: missing as 0 and, when clipping, bursts masked.
    inputs: DmSeries,
    bursts: BurstSeries,
    detector: BurstDetector,
    window: usize,
    clip: bool,
}

impl History {
    fn new(series: &DmSeries, start: usize, pool: &TrainedPool) -> Result<Self> {
        let n = series.nodes();
        let mut h = History {
            raw: DmSeries::empty(n, series.granularity_minutes(), series.first_epoch()),
            inputs: DmSeries::empty(n, series.granularity_minutes(), series.first_epoch()),
            bursts: BurstSeries::zeros(n, 0).with_first_epoch(series.first_epoch()),
            detector: BurstDetector::new(pool.threshold)?,
            window: pool.window,
            clip: pool.clip,
        };
        for t in 0..start {
            h.append(series.raw_matrix(t))?;
        }
        Ok(h)
    }

    fn append(&mut self, cells: &[f64]) -> Result<()> {
        self.raw.push_raw(cells)?;
        let t = self.raw.len() - 1;
        let (row, _) = self.detector.classify_epoch(&self.raw, t, self.window);
        let input: Vec<f64> = cells
            .iter()
            .zip(&row)
            .map(|(&v, &b)| {
                if v.is_nan() {
                    0.0
                } else if self.clip && b == 1 {
                    f64::NAN
                } else {
                    v
                }
            })
            .collect();
        self.inputs.push_raw(&input)?;
        self.bursts.push_row(&row)
    }

    /// Newest present value of `od` at or before `t`, else 0.
    fn stand_in(&self, t: usize, od: usize) -> f64 {
        (0..=t).rev().find_map(|k| self.raw.get(k, od)).unwrap_or(0.0)
    }
}

/// Forecast every epoch from `start` to the end of `series`. The forecast for
/// epoch `t + 1` only sees epochs `..= t`; the measured epoch is appended
/// afterwards.
pub fn run_online(
    series: &DmSeries,
    start: usize,
    pool: &TrainedPool,
    cfg: &OnlineConfig,
) -> Result<Vec<ForecastOutcome>> {
    let w = pool.window;
    if start < w || start >= series.len() {
        return Err(Error::TooShort { needed: w + 1, have: start.min(series.len()) });
    }
    if pool.models.is_empty() {
        return Err(Error::EmptyPool);
    }
    if let Strategy::Single(i) = cfg.strategy
        && i >= pool.models.len() {
            return Err(Error::UnknownModel(alloc::format!("pool member {i}")));
        }
    let n = series.nodes();
    let offdiag = off_diagonal(n);
    let mut history = History::new(series, start, pool)?;
    let mut out = Vec::with_capacity(series.len() - start);
    for target in start..series.len() {
        let t = target - 1;
        let label = series.epoch(target);
        let bursts = if cfg.gating {
            pool.classifier.classify(&history.bursts, t).map_err(|e| e.at_epoch(label))?
        } else {
            vec![0u8; n * n]
        };
        let mut sources = vec![Source::Forecast; n * n];
        let mut values = vec![0.0; n * n];
        let mut forecast_cells = Vec::with_capacity(offdiag.len());
        for &od in &offdiag {
            if bursts[od] == 1 {
                sources[od] = Source::Fallback;
                values[od] = history.stand_in(t, od);
            } else {
                forecast_cells.push(od);
            }
        }
        let mut selection = None;
        if !forecast_cells.is_empty() {
            let window = history.inputs.window_at(t, w)?;
            let forecast: Vec<f64> = match cfg.strategy {
                Strategy::Tubo => {
                    let (record, pred) =
                        select_model_over(&pool.models, &pool.calibration, &window, cfg.passes, &forecast_cells)
                            .map_err(|e| e.at_epoch(label))?;
                    selection = Some(record);
                    pred.mean
                }
                Strategy::Single(i) => pool.models[i].predict(&window).map_err(|e| e.at_epoch(label))?.values().to_vec(),
                Strategy::Ensemble => {
                    ensemble_predict(&pool.models, &window).map_err(|e| e.at_epoch(label))?.values().to_vec()
                }
            };
            for &od in &forecast_cells {
                values[od] = forecast[od];
            }
        }
        out.push(ForecastOutcome { epoch: label, nodes: n, sources, values, bursts, selection });
        history.append(series.raw_matrix(target))?;
    }
    Ok(out)
}


/// Raw and calibrated spread of every member against the measured epoch, for
/// each target in `start..len`. Inputs follow the online history exactly.
pub fn uncertainty_windows(
    series: &DmSeries,
    start: usize,
    pool: &TrainedPool,
    passes: usize,
) -> Result<Vec<(String, Vec<WindowUncertainty>)>> {
    let w = pool.window;
    if start < w || start >= series.len() {
        return Err(Error::TooShort { needed: w + 1, have: start.min(series.len()) });
    }
    let offdiag = off_diagonal(series.nodes());
    let mut history = History::new(series, start, pool)?;
    let mut out: Vec<(String, Vec<WindowUncertainty>)> =
        pool.models.iter().map(|m| (m.model_id.clone(), Vec::new())).collect();
    for target in start..series.len() {
        let window = history.inputs.window_at(target - 1, w)?;
        let truth = series.raw_matrix(target);
        for (m, (_, rows)) in pool.models.iter().zip(out.iter_mut()) {
            let raw = m.mc_predict(&window, passes)?;
            let cal = calibrate(&raw, &pool.calibration, &m.model_id)?;
            if let Some(u) = window_uncertainty(&raw, &cal, truth, &offdiag) {
                rows.push(u);
            }
        }
        history.append(truth)?;
    }
    Ok(out)
}
