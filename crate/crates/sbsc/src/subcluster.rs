//! Sub-cluster construction: each sampled anchor point plus its d_max
//! nearest neighbors in absolute inner product over the full dataset.

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// An anchor point with its d_max absolute-inner-product neighbors.
#[derive(Debug, Clone)]
pub struct SubCluster {
    /// Index of the sampled anchor in the dataset.
    pub anchor: usize,
    /// Member indices (anchor included), ascending, `d_max + 1` of them.
    pub members: Vec<usize>,
    /// `D x (d_max + 1)` matrix of the member columns, in member order.
    pub block: DMatrix<f64>,
}

/// Builds the sub-cluster of anchor `q`: the anchor plus the `d_max` indices
/// maximizing `|<y_q, y_i>|` over `i != q`, ties to the smaller index.
pub fn build_subcluster(data: &Dataset, q: usize, d_max: usize) -> Result<SubCluster> {
    let n = data.len();
    if q >= n {
        return Err(Error::BadParams(format!("anchor index {q} out of range for N={n}")));
    }
    if d_max < 1 || d_max > n - 1 {
        return Err(Error::BadDmax { d_max, max: n - 1 });
    }
    let scores = data.points.tr_mul(&data.points.column(q));
    let mut order: Vec<usize> = (0..n).filter(|&i| i != q).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[b]
            .abs()
            .total_cmp(&scores[a].abs())
            .then(a.cmp(&b))
    });
    let mut members: Vec<usize> = order[..d_max].to_vec();
    members.push(q);
    members.sort_unstable();
    let block = DMatrix::from_fn(data.dim(), members.len(), |i, j| {
        data.points[(i, members[j])]
    });
    Ok(SubCluster {
        anchor: q,
        members,
        block,
    })
}

/// Fraction of sub-clusters whose members all carry one ground-truth label.
///
/// An empty sub-cluster list is vacuously preserving (rate 1.0).
pub fn subcluster_preserving_rate(subclusters: &[SubCluster], labels: &[usize]) -> Result<f64> {
    if subclusters.is_empty() {
        return Ok(1.0);
    }
    let mut pure = 0usize;
    for sc in subclusters {
        let first = *sc.members.first().expect("members nonempty");
        if sc.members.iter().any(|&i| i >= labels.len()) {
            return Err(Error::MissingLabels);
        }
        if sc.members.iter().all(|&i| labels[i] == labels[first]) {
            pure += 1;
        }
    }
    Ok(pure as f64 / subclusters.len() as f64)
}
