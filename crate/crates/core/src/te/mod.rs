//! Proactive traffic engineering over a tunnel (path) set.
//!
//! Routing decisions are path-based LPs: `p1` maximizes delivered flow under
//! link capacities and per-pair demand caps; `p2` first finds that maximum
//! `F*`, then minimizes latency-weighted flow while keeping throughput at
//! `F*·(1 − 1e−6)`. A routing computed on one demand matrix is applied to the
//! true next epoch by delivering `min(allocation, truth)` per pair.

mod paths;
pub mod simplex;
mod sweep;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

pub use paths::{Path, PathSet, k_shortest_paths};
pub use sweep::{DegradationReport, EpochDegradation, SweepStrategy, apply_routing, degradation_sweep};

use crate::error::{Error, Result};
use crate::series::DemandMatrix;
use simplex::{Cmp, LinearProgram, maximize};

pub const DEFAULT_K: usize = 4;
/// Relative throughput slack allowed in the second stage of `p2`.
pub const P2_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub src: usize,
    pub dst: usize,
    pub capacity_mbps: f64,
    pub latency: f64,
}

/// Directed links between `nodes` nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    nodes: usize,
    links: Vec<Link>,
}

impl Topology {
    pub fn new(nodes: usize, links: Vec<Link>) -> Result<Self> {
        for (i, l) in links.iter().enumerate() {
            if l.src >= nodes || l.dst >= nodes || l.src == l.dst {
                return Err(Error::InvalidTopology(format!(
                    "link {i} ({} -> {}) has a bad endpoint for {nodes} nodes",
                    l.src, l.dst
                )));
            }
            if !(l.capacity_mbps.is_finite() && l.capacity_mbps > 0.0) {
                return Err(Error::InvalidTopology(format!("link {i} capacity {}", l.capacity_mbps)));
            }
            if !(l.latency.is_finite() && l.latency >= 0.0) {
                return Err(Error::InvalidTopology(format!("link {i} latency {}", l.latency)));
            }
        }
        Ok(Self { nodes, links })
    }

    /// Each undirected edge becomes two directed links with the same figures.
    pub fn bidirectional(nodes: usize, edges: &[(usize, usize, f64, f64)]) -> Result<Self> {
        let mut links = Vec::with_capacity(2 * edges.len());
        for &(a, b, capacity_mbps, latency) in edges {
            links.push(Link { src: a, dst: b, capacity_mbps, latency });
            links.push(Link { src: b, dst: a, capacity_mbps, latency });
        }
        Self::new(nodes, links)
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            nodes: self.nodes,
            links: self.links.iter().map(|l| Link { capacity_mbps: l.capacity_mbps * c, ..*l }).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    P1,
    P2,
}

impl Objective {
    pub const ALL: [Objective; 2] = [Objective::P1, Objective::P2];

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::P1 => "p1",
            Objective::P2 => "p2",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p1" => Ok(Objective::P1),
            "p2" => Ok(Objective::P2),
            other => Err(Error::Config(format!("unknown objective {other:?} (expected p1 or p2)"))),
        }
    }
}

/// Flow per (pair, path) and its consequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeSolution {
    /// Indexed by cell; one entry per path in the path set.
    pub flows: Vec<Vec<f64>>,
    pub throughput: f64,
    /// Σ flow × path latency.
    pub latency_cost: f64,
    pub link_load: Vec<f64>,
    /// Demand of pairs without any path.
    pub lost_demand: f64,
}

impl TeSolution {
    fn from_flows(topo: &Topology, paths: &PathSet, flows: Vec<Vec<f64>>, demand: &DemandMatrix) -> Self {
        let mut link_load = vec![0.0; topo.links().len()];
        let (mut throughput, mut latency_cost) = (0.0, 0.0);
        for (od, fs) in flows.iter().enumerate() {
            for (f, p) in fs.iter().zip(paths.paths(od)) {
                throughput += f;
                latency_cost += f * p.latency;
                for &l in &p.links {
                    link_load[l] += f;
                }
            }
        }
        let lost_demand = paths.unreachable().iter().map(|&od| demand.values()[od]).sum();
        Self { flows, throughput, latency_cost, link_load, lost_demand }
    }

    pub fn delivered(&self, od: usize) -> f64 {
        self.flows[od].iter().sum()
    }
}

/// Largest capacity or demand, used to bring LP coefficients near 1.
fn lp_scale(topo: &Topology, demand: &DemandMatrix) -> f64 {
    let m = topo
        .links()
        .iter()
        .map(|l| l.capacity_mbps)
        .chain(demand.values().iter().copied())
        .fold(0.0, f64::max);
    if m > 0.0 { m } else { 1.0 }
}

struct PathLp {
    /// (cell, path index) per variable.
    vars: Vec<(usize, usize)>,
    lp: LinearProgram,
    scale: f64,
}

fn check_sizes(topo: &Topology, paths: &PathSet, demand: &DemandMatrix) -> Result<()> {
    if demand.nodes != topo.nodes() || paths.nodes() != topo.nodes() {
        return Err(Error::NodeMismatch { expected: topo.nodes(), got: demand.nodes });
    }
    Ok(())
}

fn build_lp(topo: &Topology, paths: &PathSet, demand: &DemandMatrix) -> PathLp {
    let scale = lp_scale(topo, demand);
    let mut vars = Vec::new();
    for od in 0..demand.values().len() {
        if demand.values()[od] > 0.0 {
            for k in 0..paths.paths(od).len() {
                vars.push((od, k));
            }
        }
    }
    let nv = vars.len();
    let mut lp = LinearProgram::new(nv, vec![1.0; nv]);
    for (l, link) in topo.links().iter().enumerate() {
        let mut row = vec![0.0; nv];
        let mut used = false;
        for (v, &(od, k)) in vars.iter().enumerate() {
            if paths.paths(od)[k].links.contains(&l) {
                row[v] = 1.0;
                used = true;
            }
        }
        if used {
            lp.push(row, Cmp::Le, link.capacity_mbps / scale);
        }
    }
    let mut v = 0;
    while v < nv {
        let od = vars[v].0;
        let mut row = vec![0.0; nv];
        while v < nv && vars[v].0 == od {
            row[v] = 1.0;
            v += 1;
        }
        lp.push(row, Cmp::Le, demand.values()[od] / scale);
    }
    PathLp { vars, lp, scale }
}

fn unpack(plp: &PathLp, x: &[f64], paths: &PathSet) -> Vec<Vec<f64>> {
    let mut flows: Vec<Vec<f64>> = (0..paths.cells()).map(|od| vec![0.0; paths.paths(od).len()]).collect();
    for (v, &(od, k)) in plp.vars.iter().enumerate() {
        flows[od][k] = x[v].max(0.0) * plp.scale;
    }
    flows
}

/// Max-commodity-flow routing.
pub fn solve_p1(topo: &Topology, paths: &PathSet, demand: &DemandMatrix) -> Result<TeSolution> {
    check_sizes(topo, paths, demand)?;
    let plp = build_lp(topo, paths, demand);
    let flows = if plp.vars.is_empty() {
        unpack(&plp, &[], paths)
    } else {
        let sol = maximize(&plp.lp)?;
        unpack(&plp, &sol.x, paths)
    };
    Ok(TeSolution::from_flows(topo, paths, flows, demand))
}

/// Low-latency maximum flow: maximum throughput first, then the least
/// latency-weighted flow among routings within `P2_SLACK` of it.
pub fn solve_p2(topo: &Topology, paths: &PathSet, demand: &DemandMatrix) -> Result<TeSolution> {
    check_sizes(topo, paths, demand)?;
    let mut plp = build_lp(topo, paths, demand);
    if plp.vars.is_empty() {
        return Ok(TeSolution::from_flows(topo, paths, unpack(&plp, &[], paths), demand));
    }
    let stage1 = maximize(&plp.lp)?;
    let f_star = stage1.objective;
    let nv = plp.vars.len();
    plp.lp.push(vec![1.0; nv], Cmp::Ge, f_star * (1.0 - P2_SLACK));
    plp.lp.objective = plp.vars.iter().map(|&(od, k)| -paths.paths(od)[k].latency).collect();
    let stage2 = maximize(&plp.lp)?;
    Ok(TeSolution::from_flows(topo, paths, unpack(&plp, &stage2.x, paths), demand))
}

pub fn solve(objective: Objective, topo: &Topology, paths: &PathSet, demand: &DemandMatrix) -> Result<TeSolution> {
    match objective {
        Objective::P1 => solve_p1(topo, paths, demand),
        Objective::P2 => solve_p2(topo, paths, demand),
    }
}

/// Shortest-path routing of the full demand, with flows through overloaded
/// links scaled down proportionally until every link fits. Uses the first
/// path of each pair.
pub fn reactive_baseline(topo: &Topology, paths: &PathSet, demand: &DemandMatrix) -> Result<TeSolution> {
    check_sizes(topo, paths, demand)?;
    let cells = paths.cells();
    let mut rate: Vec<f64> = (0..cells)
        .map(|od| if paths.paths(od).is_empty() { 0.0 } else { demand.values()[od] })
        .collect();
    for _ in 0..64 {
        let mut load = vec![0.0; topo.links().len()];
        for od in 0..cells {
            if let Some(p) = paths.paths(od).first() {
                for &l in &p.links {
                    load[l] += rate[od];
                }
            }
        }
        let factor: Vec<f64> = topo
            .links()
            .iter()
            .zip(&load)
            .map(|(link, &ld)| if ld > link.capacity_mbps { link.capacity_mbps / ld } else { 1.0 })
            .collect();
        if factor.iter().all(|&f| f >= 1.0) {
            break;
        }
        for od in 0..cells {
            if let Some(p) = paths.paths(od).first() {
                let f = p.links.iter().map(|&l| factor[l]).fold(1.0, f64::min);
                rate[od] *= f;
            }
        }
    }
    let flows = (0..cells)
        .map(|od| {
            let mut v = vec![0.0; paths.paths(od).len()];
            if let Some(first) = v.first_mut() {
                *first = rate[od];
            }
            v
        })
        .collect();
    Ok(TeSolution::from_flows(topo, paths, flows, demand))
}

/// Independent feasibility check: non-negative flows, link loads within
/// capacity and per-pair delivery within demand, all up to `tol`.
pub fn audit(topo: &Topology, paths: &PathSet, demand: &DemandMatrix, sol: &TeSolution, tol: f64) -> Result<()> {
    let mut load = vec![0.0; topo.links().len()];
    for od in 0..paths.cells() {
        let fs = &sol.flows[od];
        if fs.len() != paths.paths(od).len() {
            return Err(Error::Lp(format!("cell {od}: {} flows for {} paths", fs.len(), paths.paths(od).len())));
        }
        let mut total = 0.0;
        for (f, p) in fs.iter().zip(paths.paths(od)) {
            if *f < -tol || !f.is_finite() {
                return Err(Error::Lp(format!("cell {od}: flow {f}")));
            }
            total += f;
            for &l in &p.links {
                load[l] += f;
            }
        }
        if total > demand.values()[od] + tol {
            return Err(Error::Lp(format!("cell {od}: delivers {total} above demand {}", demand.values()[od])));
        }
    }
    for (l, link) in topo.links().iter().enumerate() {
        if load[l] > link.capacity_mbps + tol {
            return Err(Error::Lp(format!("link {l}: load {} above capacity {}", load[l], link.capacity_mbps)));
        }
    }
    Ok(())
}
