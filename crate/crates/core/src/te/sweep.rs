//! Throughput degradation of fixed routings against the true next epoch.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Objective, PathSet, TeSolution, Topology, reactive_baseline, solve};
use crate::error::{Error, Result};
use crate::math;
use crate::series::{DemandMatrix, DmSeries};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochDegradation {
    pub epoch: usize,
    pub achieved: f64,
    pub oracle: f64,
    /// `1 − achieved / oracle`; 0 when the oracle delivers nothing.
    pub degradation: f64,
    pub latency_achieved: f64,
    pub latency_oracle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationReport {
    pub strategy: String,
    pub objective: Objective,
    pub median: f64,
    pub p5: f64,
    pub p95: f64,
    pub mean: f64,
    pub epochs: Vec<EpochDegradation>,
}

impl DegradationReport {
    fn new(strategy: &str, objective: Objective, epochs: Vec<EpochDegradation>) -> Self {
        let mut d: Vec<f64> = epochs.iter().map(|e| e.degradation).collect();
        math::sort_f64(&mut d);
        let mean = if d.is_empty() { f64::NAN } else { d.iter().sum::<f64>() / d.len() as f64 };
        Self {
            strategy: String::from(strategy),
            objective,
            median: math::percentile_sorted(&d, 0.5),
            p5: math::percentile_sorted(&d, 0.05),
            p95: math::percentile_sorted(&d, 0.95),
            mean,
            epochs,
        }
    }
}

/// Where each strategy's routing comes from.
#[derive(Debug, Clone, Copy)]
pub enum SweepStrategy<'a> {
    /// The LP on the true matrix itself.
    Oracle,
    /// The LP on a planned matrix per swept epoch.
    Plan { name: &'a str, plans: &'a [DemandMatrix] },
    /// Shortest-path routing of the true matrix.
    Reactive,
}

impl SweepStrategy<'_> {
    pub fn name(&self) -> &str {
        match self {
            SweepStrategy::Oracle => "oracle",
            SweepStrategy::Plan { name, .. } => name,
            SweepStrategy::Reactive => "reactive",
        }
    }
}

/// Keep a routing's per-path allocations and serve the true demand: each
/// pair delivers `min(allocated, truth)`, split across paths in proportion
/// to the allocation.
pub fn apply_routing(topo: &Topology, paths: &PathSet, plan: &TeSolution, truth: &DemandMatrix) -> TeSolution {
    let flows = plan
        .flows
        .iter()
        .enumerate()
        .map(|(od, fs)| {
            let alloc: f64 = fs.iter().sum();
            let want = truth.values()[od];
            let keep = if alloc > want { if alloc > 0.0 { want / alloc } else { 0.0 } } else { 1.0 };
            fs.iter().map(|f| f * keep).collect()
        })
        .collect();
    TeSolution::from_flows(topo, paths, flows, truth)
}

/// Per-epoch degradation for every strategy. `epochs` are positions in
/// `truth`; plan `i` must carry the epoch label of `epochs[i]`. Missing true
/// demand counts as zero.
pub fn degradation_sweep(
    strategies: &[SweepStrategy<'_>],
    epochs: &[usize],
    truth: &DmSeries,
    topo: &Topology,
    paths: &PathSet,
    objective: Objective,
) -> Result<Vec<DegradationReport>> {
    for s in strategies {
        if let SweepStrategy::Plan { name, plans } = s
            && plans.len() != epochs.len() {
                return Err(Error::Misaligned(format!(
                    "{name}: {} plans for {} epochs",
                    plans.len(),
                    epochs.len()
                )));
            }
    }
    let mut rows: Vec<Vec<EpochDegradation>> = strategies.iter().map(|_| Vec::with_capacity(epochs.len())).collect();
    for (i, &t) in epochs.iter().enumerate() {
        if t >= truth.len() {
            return Err(Error::Misaligned(format!("epoch index {t} beyond {} epochs", truth.len())));
        }
        let label = truth.epoch(t);
        let actual = truth.matrix_filled(t, 0.0);
        let oracle = solve(objective, topo, paths, &actual).map_err(|e| e.at_epoch(label))?;
        for (s, strategy) in strategies.iter().enumerate() {
            let got = match strategy {
                SweepStrategy::Oracle => apply_routing(topo, paths, &oracle, &actual),
                SweepStrategy::Plan { name, plans } => {
                    let plan = &plans[i];
                    if plan.epoch != label {
                        return Err(Error::Misaligned(format!(
                            "{name}: plan for epoch {} where epoch {label} was expected",
                            plan.epoch
                        )));
                    }
                    let routing = solve(objective, topo, paths, plan).map_err(|e| e.at_epoch(label))?;
                    apply_routing(topo, paths, &routing, &actual)
                }
                SweepStrategy::Reactive => reactive_baseline(topo, paths, &actual)?,
            };
            let degradation = if oracle.throughput > 1e-12 { 1.0 - got.throughput / oracle.throughput } else { 0.0 };
            rows[s].push(EpochDegradation {
                epoch: label,
                achieved: got.throughput,
                oracle: oracle.throughput,
                degradation,
                latency_achieved: got.latency_cost,
                latency_oracle: oracle.latency_cost,
            });
        }
    }
    Ok(strategies.iter().zip(rows).map(|(s, r)| DegradationReport::new(s.name(), objective, r)).collect())
}
