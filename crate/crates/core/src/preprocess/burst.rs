use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::series::{DmSeries, Window};

/// 99th-percentile z threshold for a one-sided outlier.
pub const DEFAULT_THRESHOLD: f64 = 2.576;

/// Smallest window on which the default rule can fire: a single spike in a
/// window of `w` values has z = sqrt(w - 1), and sqrt(7) < 2.576.
pub const MIN_BURST_WINDOW: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BurstCheck {
    Burst,
    Normal,
    /// Fewer than two present values in the OD slice.
    InsufficientHistory,
}

impl BurstCheck {
    pub fn indicator(self) -> u8 {
        u8::from(self == BurstCheck::Burst)
    }
}

/// Window z-score outlier rule: a value is a burst when it exceeds the window
/// mean by more than `threshold` population standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstDetector {
    pub threshold: f64,
}

impl Default for BurstDetector {
    fn default() -> Self {
        Self { threshold: DEFAULT_THRESHOLD }
    }
}

impl BurstDetector {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::Config(format!("burst threshold {threshold} must be > 0")));
        }
        Ok(Self { threshold })
    }

    /// Classify `query` against the present values of `slice`.
    pub fn check<I>(&self, slice: I, query: Option<f64>) -> BurstCheck
    where
        I: IntoIterator<Item = Option<f64>>,
        I::IntoIter: Clone,
    {
        let Some((mean, std, n)) = math::mean_std(slice.into_iter().flatten()) else {
            return BurstCheck::InsufficientHistory;
        };
        if n < 2 {
            return BurstCheck::InsufficientHistory;
        }
        match query {
            Some(x) if x - mean > self.threshold * std => BurstCheck::Burst,
            _ => BurstCheck::Normal,
        }
    }

    /// Classify the last value of `od` in `window`.
    pub fn detect(&self, window: &Window<'_>, od: usize) -> BurstCheck {
        self.check(window.od_slice(od), window.get(window.len() - 1, od))
    }

    /// Indicators for every cell of epoch `t` using the window of length `w`
    /// ending at `t`. Epochs before `w - 1` are never bursts; the diagonal
    /// never is either. Also returns how many cells were actually classified.
    pub fn classify_epoch(&self, series: &DmSeries, t: usize, w: usize) -> (Vec<u8>, usize) {
        let n = series.nodes();
        let mut out = vec![0u8; n * n];
        if t + 1 < w {
            return (out, 0);
        }
        let Ok(window) = series.window_at(t, w) else {
            return (out, 0);
        };
        let mut classified = 0;
        for od in 0..n * n {
            if od / n == od % n || !series.is_present(t, od) {
                continue;
            }
            match self.detect(&window, od) {
                BurstCheck::InsufficientHistory => {}
                c => {
                    classified += 1;
                    out[od] = c.indicator();
                }
            }
        }
        (out, classified)
    }
}

/// Binary burst indicators over `T×N×N` cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BurstSeries {
    nodes: usize,
    first_epoch: usize,
    indicators: Vec<u8>,
}

impl BurstSeries {
    pub fn zeros(nodes: usize, epochs: usize) -> Self {
        Self { nodes, first_epoch: 0, indicators: vec![0; epochs * nodes * nodes] }
    }

    pub fn from_indicators(nodes: usize, indicators: Vec<u8>) -> Result<Self> {
        let per = nodes * nodes;
        if nodes == 0 || indicators.is_empty() || !indicators.len().is_multiple_of(per) {
            return Err(Error::InvalidSeries(format!(
                "{} indicators is not a positive multiple of {per}",
                indicators.len()
            )));
        }
        if let Some(bad) = indicators.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidSeries(format!("burst indicator {bad} is not 0 or 1")));
        }
        Ok(Self { nodes, first_epoch: 0, indicators })
    }

    pub fn with_first_epoch(mut self, first_epoch: usize) -> Self {
        self.first_epoch = first_epoch;
        self
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.indicators.len() / (self.nodes * self.nodes)
    }

    pub fn is_empty(&self) -> bool {
        self.indicators.is_empty()
    }

    pub fn first_epoch(&self) -> usize {
        self.first_epoch
    }

    #[inline]
    pub fn get(&self, t: usize, od: usize) -> bool {
        self.indicators[t * self.nodes * self.nodes + od] == 1
    }

    pub fn set(&mut self, t: usize, od: usize, burst: bool) {
        let per = self.nodes * self.nodes;
        self.indicators[t * per + od] = u8::from(burst);
    }

    pub fn epoch_row(&self, t: usize) -> &[u8] {
        let per = self.nodes * self.nodes;
        &self.indicators[t * per..(t + 1) * per]
    }

    pub fn indicators(&self) -> &[u8] {
        &self.indicators
    }

    pub fn push_row(&mut self, row: &[u8]) -> Result<()> {
        let per = self.nodes * self.nodes;
        if row.len() != per {
            return Err(Error::NodeMismatch { expected: per, got: row.len() });
        }
        self.indicators.extend_from_slice(row);
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.indicators.iter().filter(|&&b| b == 1).count()
    }

    pub fn slice(&self, from: usize, to: usize) -> Result<Self> {
        if from >= to || to > self.len() {
            return Err(Error::InvalidSeries(format!(
                "slice [{from}, {to}) invalid for {} epochs",
                self.len()
            )));
        }
        let per = self.nodes * self.nodes;
        Ok(Self {
            nodes: self.nodes,
            first_epoch: self.first_epoch + from,
            indicators: self.indicators[from * per..to * per].to_vec(),
        })
    }
}

/// Demand values with bursts clipped out. `series` masks both originally
/// missing cells and clipped bursts; `missing` remembers which were which.
#[derive(Debug, Clone, PartialEq)]
pub struct NonBurstSeries {
    series: DmSeries,
    missing: Vec<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImputeScope {
    MissingOnly,
}

impl NonBurstSeries {
    /// Wrap a series without clipping anything (burst-clipping ablation).
    pub fn unclipped(series: &DmSeries) -> Self {
        let missing = series.mask().map(|m| !m).collect();
        Self { series: series.clone(), missing }
    }

    pub fn series(&self) -> &DmSeries {
        &self.series
    }

    pub fn is_missing(&self, t: usize, od: usize) -> bool {
        let per = self.series.nodes() * self.series.nodes();
        self.missing[t * per + od]
    }

    pub fn is_clipped(&self, t: usize, od: usize) -> bool {
        !self.series.is_present(t, od) && !self.is_missing(t, od)
    }

    /// Originally-missing cells become present zeros; clipped bursts stay
    /// masked so they remain excluded from the training loss.
    pub fn zero_impute(&self, _scope: ImputeScope) -> DmSeries {
        let per = self.series.nodes() * self.series.nodes();
        self.series.map_cells(|t, od, v| match v {
            Some(x) => Some(x),
            None if self.missing[t * per + od] => Some(0.0),
            None => None,
        })
    }
}

/// Output of [`split_burst`].
#[derive(Debug, Clone)]
pub struct BurstSplit {
    pub bursts: BurstSeries,
    pub non_burst: NonBurstSeries,
    /// Cells that had enough history to be classified.
    pub classified: usize,
}

/// Separate bursts from regular traffic: each cell at epoch `t >= w - 1` is
/// classified against the window ending at `t` (stride 1).
pub fn split_burst(train: &DmSeries, w: usize, detector: &BurstDetector) -> Result<BurstSplit> {
    if w < MIN_BURST_WINDOW {
        return Err(Error::Config(format!(
            "burst window {w} is below the minimum of {MIN_BURST_WINDOW}"
        )));
    }
    if train.len() < w {
        return Err(Error::TooShort { needed: w, have: train.len() });
    }
    let n = train.nodes();
    let per = n * n;
    let mut indicators = vec![0u8; train.len() * per];
    let mut classified = 0;
    for t in (w - 1)..train.len() {
        let (row, c) = detector.classify_epoch(train, t, w);
        classified += c;
        indicators[t * per..(t + 1) * per].copy_from_slice(&row);
    }
    let missing: Vec<bool> = train.mask().map(|m| !m).collect();
    let clipped = train.map_cells(|t, od, v| if indicators[t * per + od] == 1 { None } else { v });
    Ok(BurstSplit {
        bursts: BurstSeries { nodes: n, first_epoch: train.first_epoch(), indicators },
        non_burst: NonBurstSeries { series: clipped, missing },
        classified,
    })
}
