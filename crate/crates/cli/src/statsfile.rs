//! Per-state statistics as CSV: `k,E,M,L1,L2,sector,hbar`.
//!
//! Floats are written with 17 significant digits, which round-trips every
//! finite `f64` exactly.

use std::path::Path;
use std::str::FromStr;

use fput::basis::Sector;
use fput::stats::StateStats;
use fput::{Error, Result};

pub const HEADER: [&str; 7] = ["k", "E", "M", "L1", "L2", "sector", "hbar"];

#[derive(Clone, Debug, PartialEq)]
pub struct StatsRow {
    pub k: usize,
    pub energy: f64,
    pub m: f64,
    pub l1: f64,
    pub l2: f64,
    pub sector: Sector,
    pub hbar: f64,
}

impl StatsRow {
    /// Row for state `k`; the ELM columns take the `alpha = 1, 2` entries.
    pub fn from_stats(k: usize, s: &StateStats) -> Self {
        StatsRow {
            k,
            energy: s.energy,
            m: s.m,
            l1: s.elm_at(1.0).unwrap_or(f64::NAN),
            l2: s.elm_at(2.0).unwrap_or(f64::NAN),
            sector: s.sector,
            hbar: s.hbar,
        }
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn to_string(rows: &[StatsRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            fmt_f64(r.energy),
            fmt_f64(r.m),
            fmt_f64(r.l1),
            fmt_f64(r.l2),
            r.sector.name().to_string(),
            fmt_f64(r.hbar),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn parse(text: &str) -> Result<Vec<StatsRow>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header = rd.headers().map_err(|e| Error::Format(e.to_string()))?;
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Format(format!("unexpected stats header {:?}", header.iter().collect::<Vec<_>>())));
    }
    let num = |s: &str, col: &str| s.parse::<f64>().map_err(|_| Error::Format(format!("bad {col} value '{s}'")));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        rows.push(StatsRow {
            k: rec[0].parse().map_err(|_| Error::Format(format!("bad k value '{}'", &rec[0])))?,
            energy: num(&rec[1], "E")?,
            m: num(&rec[2], "M")?,
            l1: num(&rec[3], "L1")?,
            l2: num(&rec[4], "L2")?,
            sector: Sector::from_str(&rec[5]).map_err(|e| Error::Format(e.to_string()))?,
            hbar: num(&rec[6], "hbar")?,
        });
    }
    Ok(rows)
}

pub fn write(path: &Path, rows: &[StatsRow]) -> Result<()> {
    std::fs::write(path, to_string(rows)?)?;
    Ok(())
}

pub fn read(path: &Path) -> Result<Vec<StatsRow>> {
    parse(&crate::read_text(path)?)
}
