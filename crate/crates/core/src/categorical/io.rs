//! Coefficient families as CSV with columns `state, atom_index, theta, weight`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{Coeff, CoeffFamily, SupportGrid};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    state: usize,
    atom_index: usize,
    theta: f64,
    weight: f64,
}

pub fn write_family_csv<W: Write>(out: W, family: &CoeffFamily, grid: &SupportGrid) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (state, block) in family.blocks().iter().enumerate() {
        for (atom_index, &weight) in block.weights().iter().enumerate() {
            w.serialize(Row {
                state,
                atom_index,
                theta: grid.atom(atom_index),
                weight,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads rows in `(state, atom_index)` order and rebuilds the grid from the
/// `theta` column. Gaps, reordering and non-uniform strides are rejected.
pub fn read_family_csv<R: Read>(input: R) -> Result<(CoeffFamily, SupportGrid)> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut blocks: Vec<Vec<f64>> = Vec::new();
    let mut thetas: Vec<f64> = Vec::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        let line = line + 2;
        if row.state == blocks.len() && row.atom_index == 0 {
            blocks.push(Vec::new());
        }
        if row.state + 1 != blocks.len() {
            return Err(Error::Parse(format!("line {line}: state {} out of order", row.state)));
        }
        let block = blocks.last_mut().expect("nonempty after the order check");
        if row.atom_index != block.len() {
            return Err(Error::Parse(format!(
                "line {line}: atom_index {} out of order",
                row.atom_index
            )));
        }
        block.push(row.weight);
        if row.state == 0 {
            thetas.push(row.theta);
        } else if thetas.get(row.atom_index).map_or(true, |t| (t - row.theta).abs() > 1e-9) {
            return Err(Error::Parse(format!(
                "line {line}: theta {} disagrees with state 0",
                row.theta
            )));
        }
    }
    let d = thetas.len();
    if d < 2 {
        return Err(Error::Parse("need at least two atoms per state".into()));
    }
    let grid = SupportGrid::from_range(thetas[0], thetas[d - 1], d)?;
    for (k, t) in thetas.iter().enumerate() {
        if (grid.atom(k) - t).abs() > 1e-9 * (1.0 + t.abs()) {
            return Err(Error::Parse(format!("theta column is not a uniform grid at atom {k}")));
        }
    }
    let blocks = blocks
        .into_iter()
        .enumerate()
        .map(|(i, w)| {
            if w.len() != d {
                return Err(Error::Parse(format!("state {i} has {} atoms, expected {d}", w.len())));
            }
            Coeff::new(w).map_err(|e| Error::Parse(format!("state {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((CoeffFamily::new(blocks)?, grid))
}
