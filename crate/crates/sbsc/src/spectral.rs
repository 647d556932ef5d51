//! Spectral clustering of the symmetrized affinity: symmetric normalized
//! Laplacian, K smallest eigenvectors, row normalization, seeded k-means.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::affinity::AffinityMatrix;
use crate::error::{Error, Result};
use crate::substream;

/// Cluster labels for a collection, values in `0..k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    /// One label per item.
    pub labels: Vec<usize>,
    /// Number of clusters.
    pub k: usize,
}

impl LabelVector {
    /// Wraps labels after checking they stay below `k`.
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::BadParams(format!("label {bad} out of range for K={k}")));
        }
        Ok(Self { labels, k })
    }

    /// Number of labeled items.
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// True when no items are labeled.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Symmetric normalized Laplacian `I - G^{-1/2} A G^{-1/2}` with degrees
/// `g_i = sum_j A_ij`; zero-degree rows are given unit degree.
pub fn normalized_laplacian(values: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.nrows();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let g: f64 = values.row(i).sum();
            if g > 0.0 {
                1.0 / g.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| {
        let s = values[(i, j)] * inv_sqrt[i] * inv_sqrt[j];
        if i == j {
            1.0 - s
        } else {
            -s
        }
    })
}

/// Clusters the affinity's items into `k` groups.
///
/// Embedding: eigenvectors of the `k` smallest Laplacian eigenvalues, rows
/// normalized to unit length (zero rows left untouched). Grouping: k-means
/// with k-means++ seeding, 100 restarts, at most 300 iterations each, best
/// inertia wins (ties to the earlier restart).
pub fn spectral_cluster(a: &AffinityMatrix, k: usize, seed: u64) -> Result<LabelVector> {
    let n = a.values.nrows();
    if n != a.values.ncols() {
        return Err(Error::BadParams(format!(
            "affinity must be square, got {n}x{}",
            a.values.ncols()
        )));
    }
    if k < 1 || n < k {
        return Err(Error::BadParams(format!("need 1 <= K <= n, got K={k} n={n}")));
    }
    if !a.values.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::NonFiniteInput("spectral: affinity entries"));
    }

    let lap = normalized_laplacian(&a.values);
    let eigen = nalgebra::SymmetricEigen::try_new(lap, 1e-13, 50_000).ok_or(Error::EigenFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eigen.eigenvalues[x].total_cmp(&eigen.eigenvalues[y]));

    let mut embedding = DMatrix::<f64>::zeros(n, k);
    for (c, &ev) in order[..k].iter().enumerate() {
        embedding.set_column(c, &eigen.eigenvectors.column(ev));
    }
    for i in 0..n {
        let norm = embedding.row(i).norm();
        if norm > 1e-12 {
            for c in 0..k {
                embedding[(i, c)] /= norm;
            }
        }
    }

    let (labels, _) = kmeans_rows(&embedding, k, seed);
    LabelVector::new(labels, k)
}

/// Squared Euclidean distance between row `i` of `rows` and a center.
fn dist_sq(rows: &DMatrix<f64>, i: usize, center: &DVector<f64>) -> f64 {
    let mut s = 0.0;
    for c in 0..rows.ncols() {
        let d = rows[(i, c)] - center[c];
        s += d * d;
    }
    s
}

fn kmeanspp_init(rows: &DMatrix<f64>, k: usize, rng: &mut ChaCha20Rng) -> Vec<DVector<f64>> {
    let n = rows.nrows();
    let mut centers: Vec<DVector<f64>> = Vec::with_capacity(k);
    let first = rng.random_range(0..n);
    centers.push(rows.row(first).transpose());
    let mut best: Vec<f64> = (0..n).map(|i| dist_sq(rows, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let idx = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in best.iter().enumerate() {
                u -= w;
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with existing centers.
            rng.random_range(0..n)
        };
        let center = rows.row(idx).transpose();
        for i in 0..n {
            best[i] = best[i].min(dist_sq(rows, i, &center));
        }
        centers.push(center);
    }
    centers
}

fn lloyd(rows: &DMatrix<f64>, mut centers: Vec<DVector<f64>>, max_iter: usize) -> (Vec<usize>, f64) {
    let n = rows.nrows();
    let k = centers.len();
    let dim = rows.ncols();
    let mut assign = vec![usize::MAX; n];
    for _ in 0..max_iter {
        let mut changed = false;
        for i in 0..n {
            let mut best_k = 0;
            let mut best_d = dist_sq(rows, i, &centers[0]);
            for (c, center) in centers.iter().enumerate().skip(1) {
                let d = dist_sq(rows, i, center);
                if d < best_d {
                    best_d = d;
                    best_k = c;
                }
            }
            if assign[i] != best_k {
                assign[i] = best_k;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![DVector::<f64>::zeros(dim); k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            sums[assign[i]] += rows.row(i).transpose();
            counts[assign[i]] += 1;
        }
        for c in 0..k {
            if counts[c] > 0 {
                centers[c] = &sums[c] / counts[c] as f64;
            }
        }
    }
    let inertia = (0..n).map(|i| dist_sq(rows, i, &centers[assign[i]])).sum();
    (assign, inertia)
}

/// Seeded k-means over matrix rows; returns labels and inertia.
pub(crate) fn kmeans_rows(rows: &DMatrix<f64>, k: usize, seed: u64) -> (Vec<usize>, f64) {
    const RESTARTS: u64 = 100;
    const MAX_ITER: usize = 300;
    let runs: Vec<(Vec<usize>, f64)> = (0..RESTARTS)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha20Rng::seed_from_u64(substream(seed, r));
            let centers = kmeanspp_init(rows, k, &mut rng);
            lloyd(rows, centers, MAX_ITER)
        })
        .collect();
    let mut best = 0;
    for i in 1..runs.len() {
        if runs[i].1 < runs[best].1 {
            best = i;
        }
    }
    runs.into_iter().nth(best).expect("at least one restart")
}
