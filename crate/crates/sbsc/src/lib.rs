//! Sampling-based subspace clustering (SBSC).
//!
//! Clusters N points lying near a union of K low-dimensional linear
//! subspaces of R^D without ever forming an N x N affinity. The pipeline:
//!
//! 1. uniformly subsample n anchor points;
//! 2. around each anchor, collect its d_max nearest neighbors in absolute
//!    inner product over the full dataset (a *sub-cluster*);
//! 3. score every sub-cluster pair by a symmetric ridge-regression
//!    reconstruction residual and exponentiate into an n x n affinity;
//! 4. sparsify each affinity row to its strongest entries, symmetrize, and
//!    spectrally cluster the n anchors into K groups;
//! 5. label every remaining point by minimum ridge residual against
//!    per-cluster training blocks;
//! 6. optionally repeat (bagging) and majority-vote after aligning labels.
//!
//! The [`theory`] module evaluates the probability bounds that back the
//! pipeline (sub-cluster purity, distance separation, exact out-of-sample
//! labeling) and validates the underlying concentration inequalities by
//! Monte Carlo. The `sbsc` binary drives generation, runs, benchmark
//! sweeps, and bound reports from flat key=value config files.

#![forbid(unsafe_code)]

pub mod affinity;
mod assignment;
pub mod cli;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod oos_classifier;
pub mod ridge_distance;
pub mod spectral;
pub mod subcluster;
pub mod theory;

pub use error::{Error, Result};

/// Derives an independent seed for a tagged substream of a master seed
/// (splitmix64-style finalizer). Used so that stages, bags, and k-means
/// restarts draw from non-overlapping deterministic streams.
pub(crate) fn substream(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
