//! Modulated-gravity synthetic demand matrices.
//!
//! Node weights `g ~ Exp(1)` give gravity shares `s_ij ∝ (g_i g_j)^γ` over
//! the off-diagonal pairs; `γ` is solved so the spatial variance of the mean
//! matrix hits its target. Total traffic follows
//! `M(t) = mean·(1 + α·sin(2πt/P)) + ε_t` with AR(1) Gaussian noise `ε`
//! whose marginal variance is `noise_fraction` of the temporal variance
//! target; the sinusoid carries the rest. Then `d_ij(t) = M(t)·s_ij`, with
//! optional per-cell multiplicative noise, clamped at zero.
//!
//! Spatial variance is the population variance, across OD pairs, of the mean
//! demand. Temporal variance is the variance over epochs of total traffic.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::preprocess::{BurstCheck, BurstDetector, BurstSeries, DEFAULT_THRESHOLD, MIN_BURST_WINDOW};
use crate::rng;
use crate::series::{DmSeries, od_index};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedBurst {
    pub epoch: usize,
    pub src: usize,
    pub dst: usize,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "kebab-case")]
pub enum BurstPlan {
    #[default]
    None,
    Explicit { bursts: Vec<PlantedBurst> },
    /// Bursts at `offset + k·every` on every listed pair. Epochs before
    /// `window − 1` are skipped since no window can classify them.
    Periodic { pairs: Vec<(usize, usize)>, every: usize, offset: usize, multiplier: f64 },
}

fn default_granularity() -> u32 {
    5
}

fn default_window() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub nodes: usize,
    pub epochs: usize,
    /// Target mean of total traffic per epoch (Mbps).
    pub mean_total: f64,
    /// Target variance across OD pairs of the mean demand (Mbps²).
    pub spatial_variance: f64,
    /// Target variance over epochs of total traffic (Mbps²).
    pub temporal_variance: f64,
    /// Diurnal period in epochs.
    pub period: usize,
    /// Share of the temporal variance carried by noise, in `[0, 1]`.
    #[serde(default)]
    pub noise_fraction: f64,
    /// AR(1) coefficient of the total-traffic noise, in `[0, 1)`.
    #[serde(default)]
    pub noise_ar: f64,
    /// Relative standard deviation of independent per-cell noise.
    #[serde(default)]
    pub cell_noise: f64,
    #[serde(default)]
    pub bursts: BurstPlan,
    /// Window length at which planted bursts must be detectable.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_granularity")]
    pub granularity_minutes: u32,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Synth(m));
        if self.nodes < 2 {
            return bad(format!("need at least 2 nodes, got {}", self.nodes));
        }
        if self.period == 0 || self.epochs < 2 * self.period {
            return bad(format!("epochs ({}) must be at least twice the period ({})", self.epochs, self.period));
        }
        for (name, v) in [
            ("mean_total", self.mean_total),
            ("spatial_variance", self.spatial_variance),
            ("temporal_variance", self.temporal_variance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return bad(format!("noise_fraction {} outside [0, 1]", self.noise_fraction));
        }
        if !(0.0..1.0).contains(&self.noise_ar) {
            return bad(format!("noise_ar {} outside [0, 1)", self.noise_ar));
        }
        if !(self.cell_noise >= 0.0 && self.cell_noise.is_finite()) {
            return bad(format!("cell_noise {} must be non-negative", self.cell_noise));
        }
        if self.window < MIN_BURST_WINDOW {
            return bad(format!("window {} below {MIN_BURST_WINDOW}", self.window));
        }
        Ok(())
    }

    /// Modulation depth `α` and noise standard deviation implied by the
    /// temporal variance target.
    pub fn modulation(&self) -> Result<(f64, f64)> {
        let v = self.temporal_variance;
        let alpha = math::sqrt(2.0 * (1.0 - self.noise_fraction) * v) / self.mean_total;
        if alpha > 1.0 {
            return Err(Error::Synth(format!(
                "temporal_variance {v} implies modulation depth alpha = {alpha:.4} > 1 \
                 at mean_total {} (need alpha <= 1)",
                self.mean_total
            )));
        }
        Ok((alpha, math::sqrt(self.noise_fraction * v)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub bursts: Vec<PlantedBurst>,
    /// First epoch of each regime after the first.
    pub boundaries: Vec<usize>,
    pub gravity_exponent: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub series: DmSeries,
    pub bursts: BurstSeries,
    pub truth: GroundTruth,
}

fn share_variance(weights: &[f64], nodes: usize, gamma: f64) -> (Vec<f64>, f64) {
    let mut shares = vec![0.0; nodes * nodes];
    let mut total = 0.0;
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j {
                // logs keep large exponents finite
                let v = gamma * (math::ln(weights[i]) + math::ln(weights[j]));
                shares[od_index(nodes, i, j)] = v;
            }
        }
    }
    let top = (0..nodes * nodes)
        .filter(|&od| od / nodes != od % nodes)
        .map(|od| shares[od])
        .fold(f64::NEG_INFINITY, f64::max);
    for od in 0..nodes * nodes {
        if od / nodes != od % nodes {
            shares[od] = math::exp(shares[od] - top);
            total += shares[od];
        }
    }
    let p = (nodes * (nodes - 1)) as f64;
    let mut ss = 0.0;
    for od in 0..nodes * nodes {
        if od / nodes != od % nodes {
            shares[od] /= total;
            let d = shares[od] - 1.0 / p;
            ss += d * d;
        }
    }
    (shares, ss / p)
}

/// Gravity shares whose variance, scaled by `mean²`, equals the target.
fn gravity_shares(weights: &[f64], nodes: usize, mean: f64, target: f64) -> Result<(Vec<f64>, f64)> {
    let want = target / (mean * mean);
    let p = (nodes * (nodes - 1)) as f64;
    // the most concentrated share vector puts everything on one pair
    let ceiling = (1.0 - 1.0 / p) / p;
    if want >= ceiling {
        return Err(Error::Synth(format!(
            "spatial_variance {target} unreachable: at most {:.6} for mean_total {mean} over {} pairs",
            ceiling * mean * mean,
            p as usize
        )));
    }
    let mut hi = 1.0;
    while share_variance(weights, nodes, hi).1 < want {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Synth(format!(
                "spatial_variance {target} not reachable with these node weights; lower it or change the seed"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if share_variance(weights, nodes, mid).1 < want {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma = 0.5 * (lo + hi);
    Ok((share_variance(weights, nodes, gamma).0, gamma))
}

fn planned_bursts(spec: &SynthSpec) -> Result<Vec<PlantedBurst>> {
    let mut out = match &spec.bursts {
        BurstPlan::None => Vec::new(),
        BurstPlan::Explicit { bursts } => bursts.clone(),
        BurstPlan::Periodic { pairs, every, offset, multiplier } => {
            if *every == 0 {
                return Err(Error::Synth("periodic burst spacing must be positive".into()));
            }
            let mut v = Vec::new();
            let mut t = *offset;
            while t < spec.epochs {
                if t + 1 >= spec.window {
                    for &(src, dst) in pairs {
                        v.push(PlantedBurst { epoch: t, src, dst, multiplier: *multiplier });
                    }
                }
                t += every;
            }
            v
        }
    };
    for b in &out {
        if b.src >= spec.nodes || b.dst >= spec.nodes || b.src == b.dst {
            return Err(Error::Synth(format!("burst pair ({}, {}) is not an off-diagonal pair", b.src, b.dst)));
        }
        if b.epoch >= spec.epochs {
            return Err(Error::Synth(format!("burst epoch {} beyond {} epochs", b.epoch, spec.epochs)));
        }
        if !(b.multiplier > 1.0 && b.multiplier.is_finite()) {
            return Err(Error::Synth(format!("burst multiplier {} must exceed 1", b.multiplier)));
        }
    }
    out.sort_by_key(|b| (b.epoch, b.src, b.dst));
    out.dedup_by_key(|b| (b.epoch, b.src, b.dst));
    Ok(out)
}

/// Generate one regime.
pub fn generate(spec: &SynthSpec) -> Result<Generated> {
    spec.validate()?;
    let n = spec.nodes;
    let (alpha, noise_sd) = spec.modulation()?;
    let mut wr = rng::stream(spec.seed, "node-weights", 0);
    let weights: Vec<f64> = (0..n).map(|_| {
        let g: f64 = Exp1.sample(&mut wr);
        g.max(1e-12)
    }).collect();
    let (shares, gamma) = gravity_shares(&weights, n, spec.mean_total, spec.spatial_variance)?;

    let rho = spec.noise_ar;
    let innov = math::sqrt(1.0 - rho * rho);
    let mut eps = 0.0;
    let mut cells = vec![0.0; spec.epochs * n * n];
    for t in 0..spec.epochs {
        let z: f64 = StandardNormal.sample(&mut rng::stream(spec.seed, "total-noise", t as u64));
        eps = if t == 0 { z } else { rho * eps + innov * z };
        let phase = 2.0 * core::f64::consts::PI * t as f64 / spec.period as f64;
        let total = (spec.mean_total * (1.0 + alpha * math::sin(phase)) + noise_sd * eps).max(0.0);
        let row = &mut cells[t * n * n..(t + 1) * n * n];
        let mut cr = rng::stream(spec.seed, "cell-noise", t as u64);
        for (od, v) in row.iter_mut().enumerate() {
            if od / n == od % n {
                continue;
            }
            let mut d = total * shares[od];
            if spec.cell_noise > 0.0 {
                let z: f64 = StandardNormal.sample(&mut cr);
                d *= 1.0 + spec.cell_noise * z;
            }
            *v = d.max(0.0);
        }
    }

    let planted = planned_bursts(spec)?;
    let mut truth = BurstSeries::zeros(n, spec.epochs);
    for b in &planted {
        let od = od_index(n, b.src, b.dst);
        cells[b.epoch * n * n + od] *= b.multiplier;
        truth.set(b.epoch, od, true);
    }
    let series = DmSeries::dense(n, spec.granularity_minutes, cells)?;

    let detector = BurstDetector::new(DEFAULT_THRESHOLD)?;
    for b in &planted {
        let od = od_index(n, b.src, b.dst);
        let hit = b.epoch + 1 >= spec.window
            && series
                .window_at(b.epoch, spec.window)
                .is_ok_and(|w| detector.detect(&w, od) == BurstCheck::Burst);
        if !hit {
            return Err(Error::Synth(format!(
                "planted burst at epoch {} on ({}, {}) with multiplier {} is not detectable at w = {}",
                b.epoch, b.src, b.dst, b.multiplier, spec.window
            )));
        }
    }

    Ok(Generated {
        series,
        bursts: truth,
        truth: GroundTruth { bursts: planted, boundaries: Vec::new(), gravity_exponent: vec![gamma], alpha: vec![alpha] },
    })
}

/// Concatenate independently generated regimes. Burst epochs in the ground
/// truth are shifted to positions in the joined series.
pub fn mixed_regime(specs: &[SynthSpec]) -> Result<Generated> {
    let first = specs.first().ok_or_else(|| Error::Synth("no regimes given".into()))?;
    let mut out = generate(first)?;
    for spec in &specs[1..] {
        if spec.nodes != first.nodes {
            return Err(Error::NodeMismatch { expected: first.nodes, got: spec.nodes });
        }
        let offset = out.series.len();
        let next = generate(spec)?;
        out.series = out.series.concat(&next.series)?;
        for t in 0..next.bursts.len() {
            out.bursts.push_row(next.bursts.epoch_row(t))?;
        }
        out.truth.boundaries.push(offset);
        out.truth
            .bursts
            .extend(next.truth.bursts.into_iter().map(|b| PlantedBurst { epoch: b.epoch + offset, ..b }));
        out.truth.gravity_exponent.extend(next.truth.gravity_exponent);
        out.truth.alpha.extend(next.truth.alpha);
    }
    Ok(out)
}
