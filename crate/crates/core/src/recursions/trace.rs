//! Logged residual rows and their CSV form.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::categorical::CoeffFamily;
use crate::error::{Error, Result};

pub const TRACE_COLUMNS: [&str; 8] = [
    "k",
    "alpha",
    "residual_G",
    "residual_h",
    "gain_est",
    "gain_err",
    "product_residual",
    "rate_guide",
];

/// One logged iteration. Gain columns are present only for coupled runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: u64,
    pub alpha: f64,
    #[serde(rename = "residual_G")]
    pub residual_g: f64,
    pub residual_h: f64,
    pub gain_est: Option<f64>,
    pub gain_err: Option<f64>,
    pub product_residual: Option<f64>,
    pub rate_guide: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace {
    pub mode: String,
    pub seed: u64,
    pub rows: Vec<TraceRow>,
    pub final_coeffs: CoeffFamily,
    pub final_gain: Option<f64>,
}

impl IterateTrace {
    /// The row logged at iteration `k`.
    pub fn at(&self, k: u64) -> Option<&TraceRow> {
        self.rows.binary_search_by_key(&k, |r| r.k).ok().map(|i| &self.rows[i])
    }
}

pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace CSV; every column of [`TRACE_COLUMNS`] must be present,
/// `k` strictly increasing and residuals nonnegative.
pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    for col in TRACE_COLUMNS {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse(format!("trace is missing column `{col}`")));
        }
    }
    let mut rows: Vec<TraceRow> = Vec::new();
    for (i, rec) in rdr.deserialize::<TraceRow>().enumerate() {
        let row = rec.map_err(|e| Error::Parse(format!("trace line {}: {e}", i + 2)))?;
        if rows.last().is_some_and(|p| p.k >= row.k) {
            return Err(Error::Parse(format!("trace line {}: k = {} not increasing", i + 2, row.k)));
        }
        let nonneg = [Some(row.residual_g), Some(row.residual_h), row.gain_err, row.product_residual];
        if nonneg.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::Parse(format!("trace line {}: negative or NaN residual", i + 2)));
        }
        rows.push(row);
    }
    Ok(rows)
}
