use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::burst::{BurstDetector, split_burst};
use crate::error::Result;
use crate::math;
use crate::series::DmSeries;

/// Burst characteristics of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstStats {
    pub epoch_count: usize,
    pub window: usize,
    pub classified_positions: usize,
    pub burst_positions: usize,
    /// Bursts over classified positions.
    pub burst_fraction: f64,
    /// Median over present off-diagonal demands.
    pub median_mbps: f64,
    pub max_mbps: f64,
}

pub fn burst_stats(series: &DmSeries, w: usize, detector: &BurstDetector) -> Result<BurstStats> {
    let split = split_burst(series, w, detector)?;
    let n = series.nodes();
    let mut present: Vec<f64> = (0..series.len())
        .flat_map(|t| (0..n * n).filter(move |od| od / n != od % n).map(move |od| (t, od)))
        .filter_map(|(t, od)| series.get(t, od))
        .collect();
    math::sort_f64(&mut present);
    let bursts = split.bursts.count();
    Ok(BurstStats {
        epoch_count: series.len(),
        window: w,
        classified_positions: split.classified,
        burst_positions: bursts,
        burst_fraction: if split.classified == 0 {
            0.0
        } else {
            bursts as f64 / split.classified as f64
        },
        median_mbps: math::percentile_sorted(&present, 0.5),
        max_mbps: present.last().copied().unwrap_or(f64::NAN),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_fraction() {
        let cells: Vec<f64> = (0..20).flat_map(|_| [0.0, 3.0, 5.0, 0.0]).collect();
        let s = DmSeries::dense(2, 5, cells).unwrap();
        let st = burst_stats(&s, 8, &BurstDetector::default()).unwrap();
        assert_eq!(st.burst_fraction, 0.0);
        assert_eq!(st.classified_positions, 13 * 2);
        assert_eq!(st.median_mbps, 4.0);
        assert_eq!(st.max_mbps, 5.0);
    }
}
