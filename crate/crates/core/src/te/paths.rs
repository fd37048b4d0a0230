//! Loopless k-shortest paths by latency (Yen).

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use super::Topology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    /// Link ids in travel order.
    pub links: Vec<usize>,
    /// Visited nodes, both endpoints included.
    pub nodes: Vec<usize>,
    pub latency: f64,
}

impl Path {
    /// Total order: latency, then hop count, then link ids.
    fn order(&self, other: &Path) -> Ordering {
        self.latency
            .total_cmp(&other.latency)
            .then(self.links.len().cmp(&other.links.len()))
            .then_with(|| self.links.cmp(&other.links))
    }
}

/// Up to `k` paths per cell, sorted by latency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    nodes: usize,
    k: usize,
    paths: Vec<Vec<Path>>,
    unreachable: Vec<usize>,
}

impl PathSet {
    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cells(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self, od: usize) -> &[Path] {
        &self.paths[od]
    }

    /// Off-diagonal cells with no path at all.
    pub fn unreachable(&self) -> &[usize] {
        &self.unreachable
    }

    /// The first `k` paths of every cell.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            nodes: self.nodes,
            k,
            paths: self.paths.iter().map(|p| p[..p.len().min(k)].to_vec()).collect(),
            unreachable: self.unreachable.clone(),
        }
    }
}

/// Dijkstra over the links not blocked; ties go to the lower node index.
fn shortest(
    topo: &Topology,
    from: usize,
    to: usize,
    blocked_links: &[bool],
    blocked_nodes: &[bool],
) -> Option<Path> {
    let n = topo.nodes();
    let mut dist = vec![f64::INFINITY; n];
    let mut hops = vec![usize::MAX; n];
    let mut via: Vec<Option<usize>> = vec![None; n];
    let mut done = vec![false; n];
    dist[from] = 0.0;
    hops[from] = 0;
    loop {
        let mut u = None;
        for v in 0..n {
            if !done[v] && dist[v].is_finite() && !blocked_nodes[v] {
                let better = match u {
                    None => true,
                    Some(b) => (dist[v], hops[v]) < (dist[b], hops[b]),
                };
                if better {
                    u = Some(v);
                }
            }
        }
        let Some(u) = u else { break };
        if u == to {
            break;
        }
        done[u] = true;
        for (l, link) in topo.links().iter().enumerate() {
            if link.src != u || blocked_links[l] || blocked_nodes[link.dst] || done[link.dst] {
                continue;
            }
            let d = dist[u] + link.latency;
            let h = hops[u] + 1;
            if (d, h) < (dist[link.dst], hops[link.dst]) {
                dist[link.dst] = d;
                hops[link.dst] = h;
                via[link.dst] = Some(l);
            }
        }
    }
    if !dist[to].is_finite() {
        return None;
    }
    let mut links = Vec::new();
    let mut at = to;
    while at != from {
        let l = via[at]?;
        links.push(l);
        at = topo.links()[l].src;
    }
    links.reverse();
    Some(build(topo, from, links))
}

fn build(topo: &Topology, from: usize, links: Vec<usize>) -> Path {
    let mut nodes = vec![from];
    let mut latency = 0.0;
    for &l in &links {
        nodes.push(topo.links()[l].dst);
        latency += topo.links()[l].latency;
    }
    Path { links, nodes, latency }
}

fn yen(topo: &Topology, from: usize, to: usize, k: usize) -> Vec<Path> {
    let n = topo.nodes();
    let m = topo.links().len();
    let mut found: Vec<Path> = Vec::new();
    let Some(first) = shortest(topo, from, to, &vec![false; m], &vec![false; n]) else {
        return found;
    };
    found.push(first);
    let mut candidates: Vec<Path> = Vec::new();
    while found.len() < k {
        let last = found.last().expect("non-empty").clone();
        for i in 0..last.links.len() {
            let spur = last.nodes[i];
            let root = &last.links[..i];
            let mut blocked_links = vec![false; m];
            for p in &found {
                if p.links.len() > i && p.links[..i] == *root {
                    blocked_links[p.links[i]] = true;
                }
            }
            let mut blocked_nodes = vec![false; n];
            for &v in &last.nodes[..i] {
                blocked_nodes[v] = true;
            }
            if let Some(tail) = shortest(topo, spur, to, &blocked_links, &blocked_nodes) {
                let mut links = root.to_vec();
                links.extend_from_slice(&tail.links);
                let cand = build(topo, from, links);
                if !found.iter().chain(&candidates).any(|p| p.links == cand.links) {
                    candidates.push(cand);
                }
            }
        }
        let Some(best) = (0..candidates.len()).min_by(|&a, &b| candidates[a].order(&candidates[b])) else {
            break;
        };
        found.push(candidates.swap_remove(best));
    }
    found
}

/// Up to `k` loopless shortest paths by latency for every off-diagonal pair.
pub fn k_shortest_paths(topo: &Topology, k: usize) -> PathSet {
    let n = topo.nodes();
    let mut paths = vec![Vec::new(); n * n];
    let mut unreachable = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s == d || k == 0 {
                continue;
            }
            let ps = yen(topo, s, d, k);
            if ps.is_empty() {
                unreachable.push(s * n + d);
            }
            paths[s * n + d] = ps;
        }
    }
    PathSet { nodes: n, k, paths, unreachable }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::te::Link;

    #[test]
    fn triangle_two_paths() {
        let topo = Topology::bidirectional(3, &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (0, 2, 1.0, 1.0)]).unwrap();
        let ps = k_shortest_paths(&topo, 2);
        for s in 0..3 {
            for d in 0..3 {
                if s == d {
                    continue;
                }
                let p = ps.paths(s * 3 + d);
                assert_eq!(p.len(), 2);
                assert_eq!(p[0].links.len(), 1);
                assert_eq!(p[1].links.len(), 2);
                assert_eq!(*p[1].nodes.last().unwrap(), d);
            }
        }
    }

    #[test]
    fn line_has_one_path() {
        let topo = Topology::bidirectional(4, &[(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0), (2, 3, 1.0, 1.0)]).unwrap();
        let ps = k_shortest_paths(&topo, 3);
        assert!((0..16).filter(|od| od / 4 != od % 4).all(|od| ps.paths(od).len() == 1));
    }

    #[test]
    fn disconnected_pairs_listed() {
        let topo = Topology::new(3, vec![Link { src: 0, dst: 1, capacity_mbps: 1.0, latency: 1.0 }]).unwrap();
        let ps = k_shortest_paths(&topo, 2);
        assert_eq!(ps.unreachable(), &[2, 3, 5, 6, 7]);
    }
}
