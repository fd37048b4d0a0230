use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::series::{DmSeries, Window};

pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScheme {
    /// One z-score over the whole training set.
    Glob,
    /// One z-score per OD pair over its training values.
    Indv,
    /// One z-score per OD pair over each input window.
    Roll,
}

impl NormScheme {
    pub const ALL: [NormScheme; 3] = [NormScheme::Glob, NormScheme::Indv, NormScheme::Roll];

    pub fn as_str(self) -> &'static str {
        match self {
            NormScheme::Glob => "glob",
            NormScheme::Indv => "indv",
            NormScheme::Roll => "roll",
        }
    }
}

impl fmt::Display for NormScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for NormScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "glob" => Ok(NormScheme::Glob),
            "indv" => Ok(NormScheme::Indv),
            "roll" => Ok(NormScheme::Roll),
            other => Err(Error::Config(format!("unknown normalization `{other}`"))),
        }
    }
}

/// Exact per-OD affine map used for one normalization; keeping it makes the
/// inverse exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaling {
    #[inline]
    pub fn normalize(&self, od: usize, x: f64) -> f64 {
        (x - self.mean[od]) / self.std[od]
    }

    #[inline]
    pub fn denormalize(&self, od: usize, z: f64) -> f64 {
        z * self.std[od] + self.mean[od]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum NormStats {
    Glob { mean: f64, std: f64 },
    Indv { mean: Vec<f64>, std: Vec<f64> },
    Roll,
}

/// Fitted normalization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub nodes: usize,
    pub floor: f64,
    pub stats: NormStats,
}

/// Values of a window in normalized space, oldest epoch first, `NaN` where
/// masked, together with the scaling that produced them.
#[derive(Debug, Clone)]
pub struct NormalizedWindow {
    pub len: usize,
    pub cells: usize,
    pub values: Vec<f64>,
    pub scaling: Scaling,
}

impl NormalizedWindow {
    #[inline]
    pub fn get(&self, k: usize, od: usize) -> Option<f64> {
        let v = self.values[k * self.cells + od];
        if v.is_nan() { None } else { Some(v) }
    }
}

impl Normalizer {
    /// Fit on the present cells of `train`. Under INDV, OD pairs without any
    /// present value fall back to `(0, floor)`; their indices are returned.
    pub fn fit(train: &DmSeries, scheme: NormScheme) -> Result<(Self, Vec<usize>)> {
        let n = train.nodes();
        let per = n * n;
        let floor = STD_FLOOR;
        let present = |od: usize| {
            (0..train.len()).filter_map(move |t| train.get(t, od))
        };
        let stats = match scheme {
            NormScheme::Glob => {
                let all = (0..per)
                    .filter(|od| od / n != od % n)
                    .flat_map(present);
                let (mean, std, _) = math::mean_std(all).ok_or_else(|| {
                    Error::Normalization("no present training values to fit".into())
                })?;
                NormStats::Glob { mean, std: std.max(floor) }
            }
            NormScheme::Indv => {
                let mut mean = vec![0.0; per];
                let mut std = vec![floor; per];
                let mut empty = Vec::new();
                let mut any = false;
                for od in (0..per).filter(|od| od / n != od % n) {
                    match math::mean_std(present(od)) {
                        Some((m, s, _)) => {
                            mean[od] = m;
                            std[od] = s.max(floor);
                            any = true;
                        }
                        None => empty.push(od),
                    }
                }
                if !any {
                    return Err(Error::Normalization("no present training values to fit".into()));
                }
                return Ok((Self { nodes: n, floor, stats: NormStats::Indv { mean, std } }, empty));
            }
            NormScheme::Roll => NormStats::Roll,
        };
        Ok((Self { nodes: n, floor, stats }, Vec::new()))
    }

    pub fn scheme(&self) -> NormScheme {
        match self.stats {
            NormStats::Glob { .. } => NormScheme::Glob,
            NormStats::Indv { .. } => NormScheme::Indv,
            NormStats::Roll => NormScheme::Roll,
        }
    }

    /// The scaling that applies to `window` (and to the epoch it forecasts).
    pub fn scaling_for(&self, window: &Window<'_>) -> Result<Scaling> {
        let per = self.nodes * self.nodes;
        if window.nodes() != self.nodes {
            return Err(Error::NodeMismatch { expected: self.nodes, got: window.nodes() });
        }
        match &self.stats {
            NormStats::Glob { mean, std } => {
                Ok(Scaling { mean: vec![*mean; per], std: vec![*std; per] })
            }
            NormStats::Indv { mean, std } => Ok(Scaling { mean: mean.clone(), std: std.clone() }),
            NormStats::Roll => {
                if window.len() < 2 {
                    return Err(Error::Normalization(
                        "rolling normalization needs a window of at least 2 epochs".into(),
                    ));
                }
                let mut mean = vec![0.0; per];
                let mut std = vec![self.floor; per];
                for od in 0..per {
                    if let Some((m, s, _)) = math::mean_std(window.od_slice(od).flatten()) {
                        mean[od] = m;
                        std[od] = s.max(self.floor);
                    }
                }
                Ok(Scaling { mean, std })
            }
        }
    }

    /// Normalize every cell of `window`; masked cells stay `NaN`.
    pub fn normalize_window(&self, window: &Window<'_>) -> Result<NormalizedWindow> {
        let scaling = self.scaling_for(window)?;
        let per = self.nodes * self.nodes;
        let mut values = Vec::with_capacity(window.len() * per);
        for k in 0..window.len() {
            for od in 0..per {
                values.push(match window.get(k, od) {
                    Some(x) => scaling.normalize(od, x),
                    None => f64::NAN,
                });
            }
        }
        Ok(NormalizedWindow { len: window.len(), cells: per, values, scaling })
    }

    /// Inverse of [`Normalizer::normalize_window`] for the same scaling.
    pub fn denormalize_window(normalized: &NormalizedWindow) -> Vec<f64> {
        normalized
            .values
            .iter()
            .enumerate()
            .map(|(k, &z)| {
                if z.is_nan() { z } else { normalized.scaling.denormalize(k % normalized.cells, z) }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(values: &[f64]) -> DmSeries {
        let cells: Vec<f64> = values.iter().flat_map(|&v| [0.0, v, v, 0.0]).collect();
        DmSeries::dense(2, 5, cells).unwrap()
    }

    #[test]
    fn glob_hand_computed() {
        let (n, _) = Normalizer::fit(&two_node(&[0.0, 10.0]), NormScheme::Glob).unwrap();
        assert_eq!(n.stats, NormStats::Glob { mean: 5.0, std: 5.0 });
        let s = two_node(&[10.0, 10.0]);
        let z = n.normalize_window(&s.window_at(1, 2).unwrap()).unwrap();
        assert_eq!(z.get(0, 1), Some(1.0));
    }

    #[test]
    fn constant_data_hits_floor() {
        let s = two_node(&[4.0; 6]);
        for scheme in NormScheme::ALL {
            let (n, _) = Normalizer::fit(&s, scheme).unwrap();
            let z = n.normalize_window(&s.window_at(5, 4).unwrap()).unwrap();
            assert!(z.scaling.std.iter().all(|&sd| sd >= STD_FLOOR));
            for k in 0..4 {
                assert_eq!(z.get(k, 1), Some(0.0));
            }
        }
    }

    #[test]
    fn roll_stores_nothing_and_uses_window() {
        let s = two_node(&[0.0, 10.0]);
        let (n, _) = Normalizer::fit(&s, NormScheme::Roll).unwrap();
        assert_eq!(n.stats, NormStats::Roll);
        let z = n.normalize_window(&s.window_at(1, 2).unwrap()).unwrap();
        assert_eq!(z.get(1, 1), Some(1.0));
        assert!(n.normalize_window(&s.window_at(1, 1).unwrap()).is_err());
    }

    #[test]
    fn indv_empty_pair_warns() {
        let cells: Vec<Option<f64>> =
            (0..4).flat_map(|t| [Some(0.0), None, Some(t as f64), Some(0.0)]).collect();
        let s = DmSeries::from_cells(2, 5, cells).unwrap();
        let (n, empty) = Normalizer::fit(&s, NormScheme::Indv).unwrap();
        assert_eq!(empty, vec![1]);
        let NormStats::Indv { mean, std } = n.stats else { panic!() };
        assert_eq!((mean[1], std[1]), (0.0, STD_FLOOR));
    }

    #[test]
    fn masked_cells_pass_through() {
        let cells: Vec<Option<f64>> = (0..3)
            .flat_map(|t| [Some(0.0), if t == 1 { None } else { Some(3.0) }, Some(1.0), Some(0.0)])
            .collect();
        let s = DmSeries::from_cells(2, 5, cells).unwrap();
        let (n, _) = Normalizer::fit(&s, NormScheme::Roll).unwrap();
        let z = n.normalize_window(&s.window_at(2, 3).unwrap()).unwrap();
        assert_eq!(z.get(1, 1), None);
        let back = Normalizer::denormalize_window(&z);
        assert!(back[4 + 1].is_nan());
        assert_eq!(back[1], 3.0);
    }
}
