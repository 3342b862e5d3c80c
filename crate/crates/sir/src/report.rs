//! CSV report tables.

use std::io::Write;

use sir_core::metrics::{LatencyReport, MetricsReport};
use sir_core::variants::CurveRow;

use crate::error::{Result, SirError};

fn finish<W: Write>(w: csv::Writer<W>) -> Result<W> {
    w.into_inner().map_err(|e| SirError::Invalid(e.to_string()))
}

fn csv_err(e: csv::Error) -> SirError {
    SirError::Invalid(format!("csv: {e}"))
}

fn num(x: f64) -> String {
    format!("{x:.6}")
}

/// Search quality: one row per configuration.
pub fn quality_table<W: Write>(out: W, rows: &[(String, MetricsReport)]) -> Result<W> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["embedding", "map_at_1", "map_at_5", "map_at_10", "mean_r_precision", "approx_recall"])
        .map_err(csv_err)?;
    for (label, m) in rows {
        w.write_record([
            label.clone(),
            num(m.map_at_1),
            num(m.map_at_5),
            num(m.map_at_10),
            num(m.mean_r_precision),
            num(m.approx_recall),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

/// Query times: one row per configuration.
pub fn latency_table<W: Write>(out: W, rows: &[(String, LatencyReport)]) -> Result<W> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["embedding", "queries", "min_ms", "max_ms", "mean_ms", "total_hours"])
        .map_err(csv_err)?;
    for (label, l) in rows {
        w.write_record([
            label.clone(),
            l.count.to_string(),
            num(l.min_ms),
            num(l.max_ms),
            num(l.mean_ms),
            format!("{:.9}", l.total_hours),
        ])
        .map_err(csv_err)?;
    }
    finish(w)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct FilterRow {
    pub index_size: usize,
    pub with_filter_ms: f64,
    pub without_filter_ms: f64,
}

pub fn filter_table<W: Write>(out: W, rows: &[FilterRow]) -> Result<W> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["index_size", "with_filter_ms", "without_filter_ms"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.index_size.to_string(), num(r.with_filter_ms), num(r.without_filter_ms)])
            .map_err(csv_err)?;
    }
    finish(w)
}

pub fn curve_table<W: Write>(out: W, rows: &[CurveRow]) -> Result<W> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["N", "k", "mean_recall", "mean_candidates"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([r.n.to_string(), r.k.to_string(), num(r.mean_recall), num(r.mean_candidates)])
            .map_err(csv_err)?;
    }
    finish(w)
}
