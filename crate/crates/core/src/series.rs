//! Demand matrices, masked demand-matrix series, windows and splits.
//!
//! Cells are stored row-major (`src * N + dst`) and a missing cell holds
//! `NaN`, the not-a-value sentinel. Nothing outside this module reads the
//! raw storage: accessors hand out `Option<f64>` so a masked cell can never
//! be mistaken for data.

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat index of OD pair `(src, dst)` in an `N×N` row-major matrix.
#[inline]
pub fn od_index(nodes: usize, src: usize, dst: usize) -> usize {
    src * nodes + dst
}

/// Flat indices of every off-diagonal OD pair, in row-major order.
pub fn off_diagonal(nodes: usize) -> Vec<usize> {
    (0..nodes * nodes).filter(|&k| k / nodes != k % nodes).collect()
}

/// One `N×N` snapshot of demand (Mbps). Diagonal entries are zero and every
/// value is finite and nonnegative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandMatrix {
    pub nodes: usize,
    pub epoch: usize,
    values: Vec<f64>,
}

impl DemandMatrix {
    pub fn new(nodes: usize, epoch: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != nodes * nodes {
            return Err(Error::InvalidSeries(format!(
                "matrix has {} cells, expected {}",
                values.len(),
                nodes * nodes
            )));
        }
        for (k, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidSeries(format!(
                    "cell ({}, {}) holds {v}; demands must be finite and >= 0",
                    k / nodes,
                    k % nodes
                )));
            }
        }
        for i in 0..nodes {
            values[i * nodes + i] = 0.0;
        }
        Ok(Self { nodes, epoch, values })
    }

    pub fn zeros(nodes: usize, epoch: usize) -> Self {
        Self { nodes, epoch, values: alloc::vec![0.0; nodes * nodes] }
    }

    #[inline]
    pub fn get(&self, src: usize, dst: usize) -> f64 {
        self.values[od_index(self.nodes, src, dst)]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Uniformly rescale every cell by `c >= 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            nodes: self.nodes,
            epoch: self.epoch,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }
}

/// `T` epochs of `N×N` demand with a missing-value mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DmSeries {
    nodes: usize,
    granularity_minutes: u32,
    first_epoch: usize,
    cells: Vec<f64>,
}

impl DmSeries {
    /// Build from per-cell options; `None` marks a missing value. Diagonal
    /// cells are forced to present zero.
    pub fn from_cells(
        nodes: usize,
        granularity_minutes: u32,
        cells: impl IntoIterator<Item = Option<f64>>,
    ) -> Result<Self> {
        let raw: Vec<f64> = cells.into_iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        Self::from_raw(nodes, granularity_minutes, 0, raw)
    }

    /// Build from values plus an explicit mask (`true` = present). Values at
    /// masked positions are discarded.
    pub fn from_values(
        nodes: usize,
        granularity_minutes: u32,
        values: &[f64],
        mask: &[bool],
    ) -> Result<Self> {
        if values.len() != mask.len() {
            return Err(Error::InvalidSeries(format!(
                "{} values but {} mask entries",
                values.len(),
                mask.len()
            )));
        }
        let raw = values
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { v } else { f64::NAN })
            .collect();
        Self::from_raw(nodes, granularity_minutes, 0, raw)
    }

    /// Fully observed series from dense values.
    pub fn dense(nodes: usize, granularity_minutes: u32, values: Vec<f64>) -> Result<Self> {
        Self::from_raw(nodes, granularity_minutes, 0, values)
    }

    fn from_raw(
        nodes: usize,
        granularity_minutes: u32,
        first_epoch: usize,
        mut cells: Vec<f64>,
    ) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidSeries("node count must be positive".into()));
        }
        if granularity_minutes == 0 {
            return Err(Error::InvalidSeries("granularity must be positive".into()));
        }
        let per = nodes * nodes;
        if cells.is_empty() || !cells.len().is_multiple_of(per) {
            return Err(Error::InvalidSeries(format!(
                "{} cells is not a positive multiple of {per}",
                cells.len()
            )));
        }
        for (k, v) in cells.iter_mut().enumerate() {
            let od = k % per;
            if od / nodes == od % nodes {
                *v = 0.0;
                continue;
            }
            if v.is_nan() {
                continue;
            }
            if !v.is_finite() || *v < 0.0 {
                return Err(Error::InvalidSeries(format!(
                    "epoch {} cell ({}, {}) holds {v}; demands must be finite and >= 0",
                    k / per,
                    od / nodes,
                    od % nodes
                )));
            }
        }
        Ok(Self { nodes, granularity_minutes, first_epoch, cells })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn granularity_minutes(&self) -> u32 {
        self.granularity_minutes
    }

    /// Number of epochs `T`.
    pub fn len(&self) -> usize {
        self.cells.len() / (self.nodes * self.nodes)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Absolute epoch number of local index `t`.
    pub fn epoch(&self, t: usize) -> usize {
        self.first_epoch + t
    }

    pub fn first_epoch(&self) -> usize {
        self.first_epoch
    }

    #[inline]
    pub fn get(&self, t: usize, od: usize) -> Option<f64> {
        let v = self.cells[t * self.nodes * self.nodes + od];
        if v.is_nan() { None } else { Some(v) }
    }

    #[inline]
    pub fn is_present(&self, t: usize, od: usize) -> bool {
        !self.cells[t * self.nodes * self.nodes + od].is_nan()
    }

    /// Raw cells of epoch `t`; masked cells are `NaN`.
    pub fn raw_matrix(&self, t: usize) -> &[f64] {
        let per = self.nodes * self.nodes;
        &self.cells[t * per..(t + 1) * per]
    }

    /// Presence mask over all `T·N·N` cells.
    pub fn mask(&self) -> impl Iterator<Item = bool> + '_ {
        self.cells.iter().map(|v| !v.is_nan())
    }

    pub fn cells(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.cells.iter().map(|&v| if v.is_nan() { None } else { Some(v) })
    }

    /// Epoch `t` as a [`DemandMatrix`], with missing cells replaced by `fill`.
    pub fn matrix_filled(&self, t: usize, fill: f64) -> DemandMatrix {
        let values = self
            .raw_matrix(t)
            .iter()
            .map(|&v| if v.is_nan() { fill } else { v })
            .collect();
        DemandMatrix { nodes: self.nodes, epoch: self.epoch(t), values }
    }

    /// A series with no epochs yet, to be grown with [`DmSeries::push_raw`].
    pub fn empty(nodes: usize, granularity_minutes: u32, first_epoch: usize) -> Self {
        Self { nodes, granularity_minutes, first_epoch, cells: Vec::new() }
    }

    /// Copy of epochs `[from, to)`.
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
            granularity_minutes: self.granularity_minutes,
            first_epoch: self.first_epoch + from,
            cells: self.cells[from * per..to * per].to_vec(),
        })
    }

    /// Append one epoch of raw cells (`NaN` = missing).
    pub fn push_raw(&mut self, cells: &[f64]) -> Result<()> {
        let per = self.nodes * self.nodes;
        if cells.len() != per {
            return Err(Error::NodeMismatch { expected: per, got: cells.len() });
        }
        let t = self.len();
        for (od, &v) in cells.iter().enumerate() {
            let v = if od / self.nodes == od % self.nodes { 0.0 } else { v };
            if !v.is_nan() && (!v.is_finite() || v < 0.0) {
                return Err(Error::InvalidSeries(format!(
                    "epoch {} cell {od} holds {v}",
                    self.epoch(t)
                )));
            }
            self.cells.push(v);
        }
        Ok(())
    }

    /// Concatenate `other` after `self` in time.
    pub fn concat(&self, other: &DmSeries) -> Result<Self> {
        if other.nodes != self.nodes {
            return Err(Error::NodeMismatch { expected: self.nodes, got: other.nodes });
        }
        let mut cells = self.cells.clone();
        cells.extend_from_slice(&other.cells);
        Ok(Self {
            nodes: self.nodes,
            granularity_minutes: self.granularity_minutes,
            first_epoch: self.first_epoch,
            cells,
        })
    }

    /// Same shape with every cell transformed; `f` sees `None` for masked cells
    /// and its `None` output masks the cell.
    pub fn map_cells(&self, mut f: impl FnMut(usize, usize, Option<f64>) -> Option<f64>) -> Self {
        let per = self.nodes * self.nodes;
        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let od = k % per;
                if od / self.nodes == od % self.nodes {
                    return 0.0;
                }
                let cur = if v.is_nan() { None } else { Some(v) };
                f(k / per, od, cur).unwrap_or(f64::NAN)
            })
            .collect();
        Self { cells, ..self.clone_meta() }
    }

    fn clone_meta(&self) -> Self {
        Self {
            nodes: self.nodes,
            granularity_minutes: self.granularity_minutes,
            first_epoch: self.first_epoch,
            cells: Vec::new(),
        }
    }

    /// View of the `len` epochs ending at local index `end` (inclusive).
    pub fn window_at(&self, end: usize, len: usize) -> Result<Window<'_>> {
        if len == 0 || end >= self.len() || end + 1 < len {
            return Err(Error::WindowBounds { end, len, epochs: self.len() });
        }
        Ok(Window { series: self, end, len })
    }

    /// Contiguous temporal split into (train, test).
    pub fn split(&self, spec: SplitSpec) -> Result<(DmSeries, DmSeries)> {
        let t = self.len();
        if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
            return Err(Error::Split(format!(
                "train fraction {} outside (0, 1)",
                spec.train_fraction
            )));
        }
        let cut = spec.train_epochs(t);
        if cut < 1 || cut >= t {
            return Err(Error::Split(format!(
                "{t} epochs with train fraction {} leaves an empty side",
                spec.train_fraction
            )));
        }
        Ok((self.slice(0, cut)?, self.slice(cut, t)?))
    }
}

/// `D^{s,w}`: `len` consecutive epochs of a series ending at `end`.
#[derive(Debug, Clone, Copy)]
pub struct Window<'a> {
    series: &'a DmSeries,
    end: usize,
    len: usize,
}

impl<'a> Window<'a> {
    pub fn series(&self) -> &'a DmSeries {
        self.series
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn nodes(&self) -> usize {
        self.series.nodes
    }

    /// Local index of the first epoch in the window.
    pub fn start(&self) -> usize {
        self.end + 1 - self.len
    }

    /// Local index of the last epoch in the window (`s`).
    pub fn end(&self) -> usize {
        self.end
    }

    /// Local indices covered, oldest first.
    pub fn epochs(&self) -> core::ops::RangeInclusive<usize> {
        self.start()..=self.end
    }

    /// Value at offset `k` (0 = oldest) for OD index `od`.
    #[inline]
    pub fn get(&self, k: usize, od: usize) -> Option<f64> {
        self.series.get(self.start() + k, od)
    }

    /// The OD slice `D_{i,j}^{s,w}`, oldest first.
    pub fn od_slice(&self, od: usize) -> impl Iterator<Item = Option<f64>> + Clone + '_ {
        (0..self.len).map(move |k| self.get(k, od))
    }

    pub fn matrix(&self, k: usize) -> &'a [f64] {
        self.series.raw_matrix(self.start() + k)
    }

    pub fn last(&self) -> &'a [f64] {
        self.series.raw_matrix(self.end)
    }
}

/// Contiguous train/test partition: the earliest `floor(T * train_fraction)`
/// epochs train, the rest test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.6 }
    }
}

impl SplitSpec {
    pub fn train_epochs(&self, total: usize) -> usize {
        libm::floor(total as f64 * self.train_fraction) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ramp(t: usize, n: usize) -> DmSeries {
        let vals: Vec<f64> = (0..t * n * n).map(|k| (k / (n * n)) as f64 + 1.0).collect();
        DmSeries::dense(n, 5, vals).unwrap()
    }

    #[test]
    fn readback_and_mask() {
        let s = DmSeries::from_cells(
            2,
            5,
            vec![Some(0.0), Some(5.0), None, Some(0.0), Some(0.0), Some(6.0), Some(2.0), Some(0.0)],
        )
        .unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.get(0, 1), Some(5.0));
        assert_eq!(s.get(0, 2), None);
        assert_eq!(s.mask().filter(|m| !m).count(), 1);
    }

    #[test]
    fn diagonal_forced_zero() {
        let s = DmSeries::dense(2, 5, vec![3.0, 1.0, 1.0, 4.0]).unwrap();
        assert_eq!(s.get(0, 0), Some(0.0));
        assert_eq!(s.get(0, 3), Some(0.0));
    }

    #[test]
    fn rejects_negative() {
        assert!(DmSeries::dense(2, 5, vec![0.0, -1.0, 0.0, 0.0]).is_err());
        assert!(DemandMatrix::new(2, 0, vec![0.0, 1.0, f64::INFINITY, 0.0]).is_err());
    }

    #[test]
    fn window_bounds() {
        let s = ramp(10, 2);
        let w = s.window_at(9, 3).unwrap();
        assert_eq!(w.epochs().collect::<Vec<_>>(), vec![7, 8, 9]);
        let w = s.window_at(2, 3).unwrap();
        assert_eq!(w.epochs().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(matches!(s.window_at(1, 3), Err(Error::WindowBounds { .. })));
        assert!(s.window_at(10, 3).is_err());
        assert!(s.window_at(5, 0).is_err());
    }

    #[test]
    fn split_floor() {
        let s = ramp(10, 2);
        let (tr, te) = s.split(SplitSpec::default()).unwrap();
        assert_eq!((tr.len(), te.len()), (6, 4));
        assert_eq!(te.first_epoch(), 6);
        assert_eq!(te.get(0, 1), Some(7.0));
        assert_eq!(SplitSpec::default().train_epochs(48_096), 28_857);
        assert!(ramp(1, 2).split(SplitSpec::default()).is_err());
    }

    #[test]
    fn push_and_concat() {
        let mut s = ramp(2, 2);
        s.push_raw(&[9.0, f64::NAN, 1.0, 9.0]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.get(2, 0), Some(0.0));
        assert_eq!(s.get(2, 1), None);
        let c = s.concat(&ramp(2, 2)).unwrap();
        assert_eq!(c.len(), 5);
        assert!(s.concat(&ramp(2, 3)).is_err());
    }
}
