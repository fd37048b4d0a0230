//! Report envelopes and writers. Every report carries a provenance block;
//! nothing time-dependent is recorded so reruns are byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub const TOOL: &str = "tubo";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_hash: Option<String>,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &'static str, config_hash: String, seed: u64) -> Self {
        Self { tool: TOOL, version: VERSION, command, config_hash, training_hash: None, seed }
    }

    pub fn with_training_hash(mut self, h: impl Into<String>) -> Self {
        self.training_hash = Some(h.into());
        self
    }
}

#[derive(Serialize)]
struct Envelope<'a, C, T> {
    schema: &'a str,
    provenance: &'a Provenance,
    config: &'a C,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON with the provenance block and the effective config echoed.
pub fn render<C: Serialize, T: Serialize>(schema: &str, prov: &Provenance, config: &C, body: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(&Envelope { schema, provenance: prov, config, body })
        .expect("report serializes");
    bytes.push(b'\n');
    bytes
}

pub fn write_json<C: Serialize, T: Serialize>(
    path: &Path,
    schema: &str,
    prov: &Provenance,
    config: &C,
    body: &T,
) -> Result<PathBuf> {
    crate::write_file(path, &render(schema, prov, config, body))?;
    Ok(path.to_path_buf())
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, &r).expect("row serializes");
        out.push(b'\n');
    }
    crate::write_file(path, &out)
}

/// CSV with a header row; the first line is a `#` comment carrying the
/// schema and provenance hash.
pub fn write_csv<R: Serialize>(path: &Path, schema: &str, prov: &Provenance, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut buf = format!("# schema={schema} tool={} version={} config_hash={}\n", prov.tool, prov.version, prov.config_hash)
        .into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r).map_err(|e| Error::format(path, e))?;
        }
        w.flush().map_err(Error::io(path))?;
    }
    crate::write_file(path, &buf)
}
