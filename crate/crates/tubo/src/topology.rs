//! Topology JSON: `{"nodes": 4 | ["a", ...], "links": [{"src", "dst",
//! "capacity_mbps", "latency"}], "bidirectional": false}`. Endpoints are node
//! indices, or names when `nodes` lists names. With `bidirectional` every
//! link is mirrored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tubo_core::te::{Link, Topology};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nodes {
    Count(usize),
    Named(Vec<String>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub src: Endpoint,
    pub dst: Endpoint,
    pub capacity_mbps: f64,
    pub latency: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub nodes: Nodes,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub bidirectional: bool,
}

impl TopologyFile {
    pub fn resolve(&self) -> std::result::Result<Topology, String> {
        let (n, names): (usize, &[String]) = match &self.nodes {
            Nodes::Count(n) => (*n, &[]),
            Nodes::Named(names) => (names.len(), names),
        };
        let index = |e: &Endpoint, k: usize| -> std::result::Result<usize, String> {
            match e {
                Endpoint::Index(i) => Ok(*i),
                Endpoint::Name(s) => names
                    .iter()
                    .position(|x| x == s)
                    .ok_or_else(|| format!("link {k}: unknown node `{s}`")),
            }
        };
        let mut links = Vec::with_capacity(self.links.len() * if self.bidirectional { 2 } else { 1 });
        for (k, l) in self.links.iter().enumerate() {
            let (src, dst) = (index(&l.src, k)?, index(&l.dst, k)?);
            links.push(Link { src, dst, capacity_mbps: l.capacity_mbps, latency: l.latency });
            if self.bidirectional {
                links.push(Link { src: dst, dst: src, capacity_mbps: l.capacity_mbps, latency: l.latency });
            }
        }
        Topology::new(n, links).map_err(|e| e.to_string())
    }
}

pub fn parse_topology(path: &Path, text: &str) -> Result<Topology> {
    let file: TopologyFile = serde_json::from_str(text).map_err(|e| Error::format(path, e))?;
    file.resolve().map_err(|e| Error::format(path, e))
}

pub fn load_topology(path: &Path) -> Result<Topology> {
    let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
    parse_topology(path, &text)
}
