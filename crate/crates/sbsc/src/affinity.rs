//! The n x n sub-cluster affinity: exponentiated ridge distances, per-row
//! sparsification, and symmetrization.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ridge_distance::RidgeKernel;
use crate::subcluster::SubCluster;

/// Processing stage of an affinity matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffinityState {
    /// Dense `exp(-distance/2)` values, diagonal 1.
    Raw,
    /// Per row, only the strongest `t_max` entries survive.
    Sparsified,
    /// `values + values'`; the form spectral clustering consumes.
    Symmetrized,
}

/// Dense nonnegative affinity between sub-clusters.
#[derive(Debug, Clone)]
pub struct AffinityMatrix {
    /// `n x n` affinity values.
    pub values: DMatrix<f64>,
    /// Which processing stages have been applied.
    pub state: AffinityState,
}

/// Builds the raw affinity `exp(-d(C_i, C_j)/2)` over all sub-cluster pairs.
///
/// Each unordered pair is evaluated once and mirrored; the diagonal is 1
/// (self-distance 0 by convention). Pair evaluation shares one Cholesky
/// factorization per sub-cluster.
pub fn build_affinity(subclusters: &[SubCluster], lambda: f64) -> Result<AffinityMatrix> {
    let n = subclusters.len();
    if n < 2 {
        return Err(Error::BadParams(format!("need at least 2 sub-clusters, got {n}")));
    }
    if subclusters
        .iter()
        .any(|sc| !sc.block.iter().all(|v| v.is_finite()))
    {
        return Err(Error::NonFiniteInput("affinity: sub-cluster block"));
    }
    let kernels: Vec<RidgeKernel> = subclusters
        .iter()
        .map(|sc| RidgeKernel::new(&sc.block, lambda))
        .collect::<Result<_>>()?;
    let sq_norms: Vec<f64> = subclusters
        .iter()
        .map(|sc| sc.block.iter().map(|v| v * v).sum())
        .collect();

    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = Vec::with_capacity(n - i - 1);
            for j in (i + 1)..n {
                // One cross-Gram per pair serves both directions.
                let cross = subclusters[i].block.tr_mul(&subclusters[j].block);
                let r_i_from_j = kernels[j].residual_sq(sq_norms[i], &cross.transpose()).sqrt();
                let r_j_from_i = kernels[i].residual_sq(sq_norms[j], &cross).sqrt();
                let dist = r_i_from_j + r_j_from_i;
                row.push((j, (-dist / 2.0).exp()));
            }
            row
        })
        .collect();

    let mut values = DMatrix::<f64>::identity(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row {
            values[(i, j)] = v;
            values[(j, i)] = v;
        }
    }
    Ok(AffinityMatrix {
        values,
        state: AffinityState::Raw,
    })
}

/// Keeps, in each row, exactly the `t_max` largest entries (ties to the
/// smaller column index) and zeroes the rest. `t_max = n` is a no-op.
pub fn sparsify(a: AffinityMatrix, t_max: usize) -> Result<AffinityMatrix> {
    assert_eq!(a.state, AffinityState::Raw, "sparsify expects a raw affinity");
    let n = a.values.nrows();
    if t_max < 1 || t_max > n {
        return Err(Error::BadThreshold { t_max, n });
    }
    if t_max == n {
        return Ok(AffinityMatrix {
            values: a.values,
            state: AffinityState::Sparsified,
        });
    }
    let mut values = a.values;
    let survivors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_unstable_by(|&x, &y| values[(i, y)].total_cmp(&values[(i, x)]).then(x.cmp(&y)));
            order.truncate(t_max);
            order
        })
        .collect();
    for (i, keep) in survivors.into_iter().enumerate() {
        let mut mask = vec![false; n];
        for j in keep {
            mask[j] = true;
        }
        for j in 0..n {
            if !mask[j] {
                values[(i, j)] = 0.0;
            }
        }
    }
    Ok(AffinityMatrix {
        values,
        state: AffinityState::Sparsified,
    })
}

/// Replaces the matrix by `values + values'`.
pub fn symmetrize(a: AffinityMatrix) -> AffinityMatrix {
    assert_eq!(
        a.state,
        AffinityState::Sparsified,
        "symmetrize expects a sparsified affinity"
    );
    let values = &a.values + a.values.transpose();
    AffinityMatrix {
        values,
        state: AffinityState::Symmetrized,
    }
}

/// Writes the matrix as plain CSV (debugging aid, flag-gated in the CLI).
pub fn save_affinity_csv(a: &AffinityMatrix, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for i in 0..a.values.nrows() {
        let row: Vec<String> = (0..a.values.ncols())
            .map(|j| a.values[(i, j)].to_string())
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
