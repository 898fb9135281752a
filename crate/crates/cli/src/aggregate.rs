//! Seed aggregation of residual traces.

use std::io::Write;

use qcat::recursions::TraceRow;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const AGGREGATE_COLUMNS: [&str; 12] = [
    "k",
    "alpha",
    "n",
    "mean_residual_G",
    "stderr_residual_G",
    "mean_residual_h",
    "stderr_residual_h",
    "mean_gain_err",
    "stderr_gain_err",
    "mean_product_residual",
    "stderr_product_residual",
    "rate_guide",
];

/// Sample mean with standard error; the error is absent for a single sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stderr: Option<f64>,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let stderr = (xs.len() >= 2).then(|| {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        });
        Self { mean, stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub k: u64,
    pub alpha: f64,
    pub n: usize,
    pub residual_g: Stat,
    pub residual_h: Stat,
    pub gain_err: Option<Stat>,
    pub product_residual: Option<Stat>,
    pub rate_guide: Option<f64>,
}

fn optional(xs: Vec<Option<f64>>) -> Option<Stat> {
    let xs: Option<Vec<f64>> = xs.into_iter().collect();
    xs.map(|v| Stat::of(&v))
}

/// Row-wise seed statistics. All traces must log the same iterations.
pub fn aggregate(traces: &[&[TraceRow]]) -> Result<Vec<AggregateRow>, CliError> {
    let first = traces
        .first()
        .ok_or_else(|| CliError::Invalid("no traces to aggregate".into()))?;
    for (s, t) in traces.iter().enumerate() {
        if t.len() != first.len() || t.iter().zip(first.iter()).any(|(a, b)| a.k != b.k) {
            return Err(CliError::Invalid(format!(
                "trace {s} logs different iterations than trace 0"
            )));
        }
    }
    Ok((0..first.len())
        .map(|i| {
            let col = |f: &dyn Fn(&TraceRow) -> f64| traces.iter().map(|t| f(&t[i])).collect::<Vec<_>>();
            let ocol = |f: &dyn Fn(&TraceRow) -> Option<f64>| traces.iter().map(|t| f(&t[i])).collect::<Vec<_>>();
            AggregateRow {
                k: first[i].k,
                alpha: first[i].alpha,
                n: traces.len(),
                residual_g: Stat::of(&col(&|r| r.residual_g)),
                residual_h: Stat::of(&col(&|r| r.residual_h)),
                gain_err: optional(ocol(&|r| r.gain_err)),
                product_residual: optional(ocol(&|r| r.product_residual)),
                rate_guide: first[i].rate_guide,
            }
        })
        .collect())
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_COLUMNS)?;
    let f = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.k.to_string(),
            r.alpha.to_string(),
            r.n.to_string(),
            r.residual_g.mean.to_string(),
            f(r.residual_g.stderr),
            r.residual_h.mean.to_string(),
            f(r.residual_h.stderr),
            f(r.gain_err.map(|s| s.mean)),
            f(r.gain_err.and_then(|s| s.stderr)),
            f(r.product_residual.map(|s| s.mean)),
            f(r.product_residual.and_then(|s| s.stderr)),
            f(r.rate_guide),
        ])?;
    }
    w.flush()?;
    Ok(())
}
