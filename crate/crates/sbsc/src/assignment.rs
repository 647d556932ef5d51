//! Contingency tables and optimal label assignment, shared by the accuracy
//! metric and cross-run label alignment.

use pathfinding::matrix::Matrix;
use pathfinding::prelude::kuhn_munkres;

use crate::error::{Error, Result};

/// K x K contingency counts between two equal-length label vectors, with
/// K = 1 + the largest label seen in either.
pub(crate) fn contingency(a: &[usize], b: &[usize]) -> Result<Vec<Vec<i64>>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::BadParams("empty label vectors".into()));
    }
    let k = 1 + a.iter().chain(b.iter()).copied().max().unwrap_or(0);
    let mut counts = vec![vec![0i64; k]; k];
    for (&x, &y) in a.iter().zip(b.iter()) {
        counts[x][y] += 1;
    }
    Ok(counts)
}

/// Row-to-column mapping maximizing the total of the selected cells, plus
/// that total. O(K^3) assignment, never factorial enumeration.
pub(crate) fn best_assignment(counts: &[Vec<i64>]) -> (Vec<usize>, i64) {
    let weights = Matrix::from_rows(counts.iter().cloned()).expect("square contingency");
    let (total, mapping) = kuhn_munkres(&weights);
    (mapping, total)
}
