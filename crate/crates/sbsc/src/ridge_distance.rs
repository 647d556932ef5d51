//! Ridge-regression reconstruction residuals, the symmetric sub-cluster
//! distance built from them, and the data-driven regularization weight.
//!
//! The residual of reconstructing a block A from a block B is
//! `||A - B (B'B + lambda I)^{-1} B'A||_F`. Only the Gram matrix `B'B` is
//! factored (Cholesky; always SPD for lambda > 0), and the norm is evaluated
//! in trace form without materializing the reconstruction:
//! `r^2 = ||A||_F^2 - <C, X> - lambda ||X||_F^2` with `C = B'A` and
//! `X = (B'B + lambda I)^{-1} C`.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::subcluster::SubCluster;

/// Cached Cholesky factorization of `B'B + lambda I` for one block.
pub(crate) struct RidgeKernel {
    chol: Cholesky<f64, Dyn>,
    lambda: f64,
}

impl RidgeKernel {
    pub(crate) fn new(b: &DMatrix<f64>, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::BadConstants(format!(
                "regularization weight must be finite and positive, got {lambda}"
            )));
        }
        let mut gram = b.tr_mul(b);
        for i in 0..gram.nrows() {
            gram[(i, i)] += lambda;
        }
        let chol = Cholesky::new(gram).ok_or(Error::NonFiniteInput("ridge normal equations"))?;
        Ok(Self { chol, lambda })
    }

    /// Squared residual given `a_sq = ||A||_F^2` and `c = B'A`.
    pub(crate) fn residual_sq(&self, a_sq: f64, c: &DMatrix<f64>) -> f64 {
        let x = self.chol.solve(c);
        (a_sq - c.dot(&x) - self.lambda * x.dot(&x)).max(0.0)
    }

    /// `(B'B + lambda I)^{-1} C` for a block of right-hand sides.
    pub(crate) fn solve(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(c)
    }
}

fn check_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(what))
    }
}

/// `||A - B (B'B + lambda I)^{-1} B'A||_F` via an SPD solve.
pub fn ridge_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::LengthMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    check_finite(a, "ridge_residual: left block")?;
    check_finite(b, "ridge_residual: right block")?;
    let kernel = RidgeKernel::new(b, lambda)?;
    let c = b.tr_mul(a);
    let a_sq = a.iter().map(|v| v * v).sum();
    Ok(kernel.residual_sq(a_sq, &c).sqrt())
}

/// Symmetric sub-cluster distance: the residual of reconstructing each block
/// from the other, summed.
pub fn cluster_distance(ci: &SubCluster, cj: &SubCluster, lambda: f64) -> Result<f64> {
    Ok(ridge_residual(&ci.block, &cj.block, lambda)? + ridge_residual(&cj.block, &ci.block, lambda)?)
}

/// Positive spectrum of `block' block` (descending), identical to the
/// positive spectrum of `block block'`.
fn positive_spectrum(block: &DMatrix<f64>, index: usize) -> Result<Vec<f64>> {
    let (rows, cols) = (block.nrows(), block.ncols());
    let gram = if cols <= rows {
        block.tr_mul(block)
    } else {
        block * block.transpose()
    };
    let eigen = nalgebra::SymmetricEigen::try_new(gram, 1e-13, 10_000).ok_or(Error::EigenFailure)?;
    let mut vals: Vec<f64> = eigen.eigenvalues.iter().copied().collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    let top = vals.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::DegenerateSubcluster(index));
    }
    let tol = 1e-12 * top;
    vals.retain(|&v| v > tol);
    Ok(vals)
}

/// `sqrt(sum_j 1 / a_j^2)` over the block's positive spectrum, capped at a
/// declared subspace dimension when one is known.
pub(crate) fn block_score(block: &DMatrix<f64>, d: Option<usize>, index: usize) -> Result<f64> {
    let vals = positive_spectrum(block, index)?;
    let cap = match d {
        Some(d) => {
            if vals.len() < d {
                eprintln!(
                    "warning: block {index} has {} eigenvalues above tolerance, \
                     fewer than the declared subspace dimension {d}",
                    vals.len()
                );
            }
            vals.len().min(d)
        }
        None => vals.len(),
    };
    let sum: f64 = vals[..cap].iter().map(|&v| 1.0 / (v * v)).sum();
    Ok(sum.sqrt())
}

/// Largest block score over a set of blocks, divided by D (noisy) or N
/// (noiseless). See [`recommend_lambda`].
pub(crate) fn recommend_lambda_blocks<'a, I>(
    blocks: I,
    dim: usize,
    n_points: usize,
    noisy: bool,
    d: Option<usize>,
) -> Result<f64>
where
    I: IntoIterator<Item = &'a DMatrix<f64>>,
{
    let mut best: Option<f64> = None;
    for (i, block) in blocks.into_iter().enumerate() {
        let score = block_score(block, d, i)?;
        best = Some(best.map_or(score, |b: f64| b.max(score)));
    }
    let best = best.ok_or_else(|| Error::BadParams("no blocks to estimate lambda from".into()))?;
    let denom = if noisy { dim as f64 } else { n_points as f64 };
    Ok(best / denom)
}

/// Data-driven regularization weight.
///
/// Per sub-cluster, takes the eigenvalues `a_1 >= a_2 >= ...` of the block's
/// outer product above tolerance `1e-12 * a_1` and scores the sub-cluster as
/// `sqrt(sum_j 1 / a_j^2)`, with `j` capped at `d` when a subspace dimension
/// is declared. Returns the largest score divided by D (noisy data) or by N
/// (noiseless). When fewer than the declared `d` eigenvalues survive the
/// tolerance, the sum runs over those found and a warning is printed.
pub fn recommend_lambda(
    subclusters: &[SubCluster],
    dim: usize,
    n_points: usize,
    noisy: bool,
    d: Option<usize>,
) -> Result<f64> {
    recommend_lambda_blocks(subclusters.iter().map(|sc| &sc.block), dim, n_points, noisy, d)
}
