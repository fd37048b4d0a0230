//! The dm-csv demand-matrix format and the long `epoch,src,dst,mbps` ingest
//! format.
//!
//! dm-csv: a header line `# nodes=N granularity_min=G`, then one line per
//! epoch holding `N²` comma-separated cells in row-major order. An empty
//! cell is a missing value.

use std::fmt::Write as _;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;
use tubo_core::DmSeries;
use tubo_core::preprocess::BurstSeries;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub nodes: usize,
    pub granularity_minutes: u32,
}

fn parse_error(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, msg: msg.into() }
}

fn parse_header(path: &Path, line: &str) -> Result<Header> {
    let bad = || parse_error(path, 1, format!("expected `# nodes=N granularity_min=G`, found `{line}`"));
    let rest = line.strip_prefix('#').ok_or_else(bad)?;
    let (mut nodes, mut gran) = (None, None);
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(bad)?;
        match k {
            "nodes" => nodes = Some(v.parse::<usize>().map_err(|_| bad())?),
            "granularity_min" => gran = Some(v.parse::<u32>().map_err(|_| bad())?),
            _ => return Err(bad()),
        }
    }
    match (nodes, gran) {
        (Some(n), Some(g)) if n > 0 && g > 0 => Ok(Header { nodes: n, granularity_minutes: g }),
        _ => Err(bad()),
    }
}

fn parse_cell(path: &Path, line: u64, col: usize, cell: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_error(path, line, format!("cell {col}: `{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("cell {col}: `{cell}` is not finite")));
    }
    if v < 0.0 {
        return Err(parse_error(path, line, format!("cell {col}: negative demand {v}")));
    }
    Ok(Some(v))
}

/// Parse dm-csv text; `path` only labels errors.
pub fn parse_dm_csv(path: &Path, text: &str) -> Result<DmSeries> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    let header = parse_header(path, first.trim_end_matches('\r'))?;
    let per = header.nodes * header.nodes;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(body.as_bytes());
    let mut cells = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line() + 1), e.to_string()))?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line()) + 1;
        if record.len() != per {
            return Err(parse_error(
                path,
                line,
                format!("row has {} cells, nodes={} needs {per}", record.len(), header.nodes),
            ));
        }
        for (col, cell) in record.iter().enumerate() {
            cells.push(parse_cell(path, line, col, cell)?);
        }
    }
    if cells.is_empty() {
        return Err(parse_error(path, 2, "no epochs after the header"));
    }
    DmSeries::from_cells(header.nodes, header.granularity_minutes, cells)
        .map_err(|e| Error::format(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    let mut text = String::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(Error::io(path))?;
    Ok(text)
}

pub fn load_series(path: &Path) -> Result<DmSeries> {
    parse_dm_csv(path, &read_text(path)?)
}

/// Render a series; values use the shortest round-trip decimal form.
pub fn to_dm_csv(series: &DmSeries) -> String {
    let n = series.nodes();
    let mut out = format!("# nodes={n} granularity_min={}\n", series.granularity_minutes());
    for t in 0..series.len() {
        for od in 0..n * n {
            if od > 0 {
                out.push(',');
            }
            if let Some(v) = series.get(t, od) {
                write!(out, "{v}").expect("writing to a String");
            }
        }
        out.push('\n');
    }
    out
}

pub fn save_series(path: &Path, series: &DmSeries) -> Result<()> {
    crate::write_file(path, to_dm_csv(series).as_bytes())
}

/// Burst indicators as dm-csv with cells in {0, 1}.
pub fn to_burst_csv(bursts: &BurstSeries, granularity_minutes: u32) -> String {
    let n = bursts.nodes();
    let mut out = format!("# nodes={n} granularity_min={granularity_minutes}\n");
    for t in 0..bursts.len() {
        let row: Vec<&str> = bursts.epoch_row(t).iter().map(|&b| if b == 1 { "1" } else { "0" }).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Deserialize)]
struct LongRow {
    epoch: u64,
    src: usize,
    dst: usize,
    mbps: String,
}

/// Parse `epoch,src,dst,mbps` rows (with that header). Epochs must not
/// decrease; epochs with no rows become fully missing matrices; pairs not
/// listed within a listed epoch are missing too. `nodes` defaults to one
/// more than the largest index seen.
pub fn parse_long(path: &Path, text: &str, nodes: Option<usize>, granularity_minutes: u32) -> Result<DmSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_error(path, 1, e.to_string()))?.clone();
    let mut rows: Vec<(u64, usize, usize, f64, u64)> = Vec::new();
    let (mut first_epoch, mut last_epoch) = (None, None);
    let mut record = csv::StringRecord::new();
    loop {
        let more = rdr
            .read_record(&mut record)
            .map_err(|e| parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string()))?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        let rec: LongRow = record.deserialize(Some(&headers)).map_err(|e| parse_error(path, line, e.to_string()))?;
        if let Some(prev) = last_epoch
            && rec.epoch < prev {
                return Err(parse_error(
                    path,
                    line,
                    format!("epoch {} after epoch {prev}; epochs must not decrease", rec.epoch),
                ));
            }
        first_epoch.get_or_insert(rec.epoch);
        last_epoch = Some(rec.epoch);
        if let Some(v) = parse_cell(path, line, 3, &rec.mbps)? {
            rows.push((rec.epoch, rec.src, rec.dst, v, line));
        }
    }
    let (Some(first), Some(last)) = (first_epoch, last_epoch) else {
        return Err(parse_error(path, 2, "no demand rows"));
    };
    let seen = rows.iter().map(|r| r.1.max(r.2) + 1).max().unwrap_or(1);
    let n = nodes.unwrap_or(seen);
    let per = n * n;
    let epochs = (last - first + 1) as usize;
    let mut cells = vec![None; epochs * per];
    for &(epoch, src, dst, v, line) in &rows {
        if src >= n || dst >= n {
            return Err(parse_error(path, line, format!("pair ({src}, {dst}) outside {n} nodes")));
        }
        let k = (epoch - first) as usize * per + src * n + dst;
        if cells[k].is_some() {
            return Err(parse_error(path, line, format!("duplicate row for epoch {epoch} pair ({src}, {dst})")));
        }
        cells[k] = Some(v);
    }
    DmSeries::from_cells(n, granularity_minutes, cells).map_err(|e| Error::format(path, e))
}

pub fn load_long(path: &Path, nodes: Option<usize>, granularity_minutes: u32) -> Result<DmSeries> {
    parse_long(path, &read_text(path)?, nodes, granularity_minutes)
}
