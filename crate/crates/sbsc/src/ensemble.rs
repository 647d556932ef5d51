//! End-to-end pipeline orchestration: subsampling, sub-cluster affinities,
//! adaptive threshold selection, spectral clustering of the subsample,
//! out-of-sample labeling, and majority-vote bagging over repeated runs.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::affinity::{build_affinity, sparsify, symmetrize, AffinityMatrix, AffinityState};
use crate::assignment::{best_assignment, contingency};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::oos_classifier::{classify, fit_projectors, fit_projectors_auto};
use crate::ridge_distance::recommend_lambda;
use crate::spectral::{spectral_cluster, LabelVector};
use crate::subcluster::{build_subcluster, SubCluster};
use crate::substream;

const SUBSAMPLE_TAG: u64 = 1;
const SELECT_TAG: u64 = 2;
const PROJECTOR_TAG: u64 = 3;

/// Tuning parameters for one SBSC run (or a bag of them).
#[derive(Debug, Clone)]
pub struct SBSCParams {
    /// Number of clusters K.
    pub k: usize,
    /// Subsample size n.
    pub n: usize,
    /// Neighbors per sub-cluster.
    pub d_max: usize,
    /// Regularization weight for sub-cluster distances; `None` derives it
    /// from the sub-cluster spectra.
    pub lambda1: Option<f64>,
    /// Regularization weight for out-of-sample labeling; `None` derives it
    /// from the sampled training blocks.
    pub lambda2: Option<f64>,
    /// Training points sampled per cluster for out-of-sample labeling.
    pub m: usize,
    /// Sparsification thresholds to sweep; `None` uses [`default_grid`].
    pub threshold_grid: Option<Vec<usize>>,
    /// Number of bagged runs B.
    pub bags: usize,
    /// Master seed; bag b runs with seed + b.
    pub seed: u64,
    /// Whether the data are treated as noisy; switches the denominator of
    /// the derived regularization weights from N to D.
    pub noisy: bool,
    /// Declared subspace dimension, caps the spectra behind derived weights.
    pub subspace_dim: Option<usize>,
}

impl SBSCParams {
    /// Defaults for a dataset of `n_points` points in dimension `dim`:
    /// n = ceil(8 K log10 N), d_max = ceil(0.6 D), m = ceil(0.3 D), one bag,
    /// derived regularization weights, seed 0, noiseless denominator.
    pub fn heuristic(k: usize, n_points: usize, dim: usize) -> Self {
        let n_raw = (8.0 * k as f64 * (n_points as f64).log10()).ceil() as usize;
        let n = n_raw.max(k).max(2).min(n_points);
        let d_max = ((0.6 * dim as f64).ceil() as usize)
            .max(1)
            .min(n_points.saturating_sub(1).max(1));
        let m = ((0.3 * dim as f64).ceil() as usize).max(1);
        Self {
            k,
            n,
            d_max,
            lambda1: None,
            lambda2: None,
            m,
            threshold_grid: None,
            bags: 1,
            seed: 0,
            noisy: false,
            subspace_dim: None,
        }
    }

    /// Checks the parameters against a dataset of N points.
    pub fn validate(&self, data: &Dataset) -> Result<()> {
        let n_points = data.len();
        if n_points == 0 {
            return Err(Error::BadParams("dataset is empty".into()));
        }
        if self.k < 1 {
            return Err(Error::BadParams("K must be at least 1".into()));
        }
        if self.n < 2 || self.n > n_points {
            return Err(Error::BadParams(format!(
                "subsample size {} outside [2, {n_points}]",
                self.n
            )));
        }
        if self.n < self.k {
            return Err(Error::BadParams(format!(
                "subsample size {} is below K = {}",
                self.n, self.k
            )));
        }
        if self.d_max < 1 || self.d_max > n_points - 1 {
            return Err(Error::BadDmax {
                d_max: self.d_max,
                max: n_points - 1,
            });
        }
        if self.m < 1 {
            return Err(Error::BadParams("m must be at least 1".into()));
        }
        if self.bags < 1 {
            return Err(Error::BadParams("bag count must be at least 1".into()));
        }
        for (name, value) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::BadConstants(format!(
                        "{name} must be finite and positive, got {v}"
                    )));
                }
            }
        }
        if let Some(grid) = &self.threshold_grid {
            if grid.is_empty() {
                return Err(Error::BadParams("threshold grid is empty".into()));
            }
            if let Some(&bad) = grid.iter().find(|&&t| t < 1 || t > self.n) {
                return Err(Error::BadThreshold {
                    t_max: bad,
                    n: self.n,
                });
            }
        }
        if self.subspace_dim == Some(0) {
            return Err(Error::BadParams(
                "declared subspace dimension must be positive".into(),
            ));
        }
        Ok(())
    }

    /// The sparsification grid to sweep: the explicit one when set, else the
    /// default for this n and K.
    pub fn grid(&self) -> Vec<usize> {
        match &self.threshold_grid {
            Some(g) => g.clone(),
            None => default_grid(self.n, self.k),
        }
    }
}

/// Descending threshold sweep {2n/K, n/K, n/(1.5K), n/(2K), n/(2.5K),
/// n/(3K)} (ceilings), clipped to [1, n], duplicates removed.
pub fn default_grid(n: usize, k: usize) -> Vec<usize> {
    let divisors = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];
    let mut grid: Vec<usize> = divisors
        .iter()
        .map(|d| ((n as f64) / (d * k as f64)).ceil() as usize)
        .map(|t| t.clamp(1, n))
        .collect();
    grid.dedup();
    grid
}

/// Wall-clock seconds per stage of one pipeline run.
#[derive(Debug, Clone, Copy, Default)]
pub struct StageTimes {
    /// Drawing the subsample.
    pub subsample: f64,
    /// Building sub-clusters and resolving the distance regularization.
    pub subclusters: f64,
    /// Raw affinity construction.
    pub affinity: f64,
    /// Threshold sweep including per-candidate spectral clustering.
    pub selection: f64,
    /// Out-of-sample fitting and classification.
    pub oos: f64,
}

impl StageTimes {
    /// Sum over all stages.
    pub fn total(&self) -> f64 {
        self.subsample + self.subclusters + self.affinity + self.selection + self.oos
    }
}

/// Everything produced by a single pipeline run.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Full-length labels; subsampled points keep their spectral labels.
    pub labels: LabelVector,
    /// Sorted indices of the subsampled points.
    pub subsample: Vec<usize>,
    /// Winning sparsification threshold.
    pub t_max: usize,
    /// Regularization weight used for sub-cluster distances.
    pub lambda1: f64,
    /// Regularization weight used for out-of-sample labeling; absent when
    /// the subsample covers the whole dataset and the stage is skipped.
    pub lambda2: Option<f64>,
    /// Per-stage wall-clock seconds.
    pub times: StageTimes,
}

/// A bagged result with its constituent runs.
#[derive(Debug, Clone)]
pub struct BagOutcome {
    /// Majority-vote labels (the single run's labels when B = 1).
    pub labels: LabelVector,
    /// One outcome per bag, in seed order.
    pub runs: Vec<RunOutcome>,
    /// Wall-clock seconds spent aligning and voting.
    pub vote_seconds: f64,
}

/// `n` sorted indices drawn uniformly without replacement from `0..n_total`.
fn subsample_indices(n_total: usize, n: usize, seed: u64) -> Vec<usize> {
    if n >= n_total {
        return (0..n_total).collect();
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut idx = rand::seq::index::sample(&mut rng, n_total, n).into_vec();
    idx.sort_unstable();
    idx
}

/// One full pipeline run, reporting the chosen threshold, the resolved
/// regularization weights, and per-stage timings alongside the labels.
pub fn run_sbsc_detailed(data: &Dataset, params: &SBSCParams, seed: u64) -> Result<RunOutcome> {
    params.validate(data)?;
    let n_total = data.len();

    let clock = Instant::now();
    let sample = subsample_indices(n_total, params.n, substream(seed, SUBSAMPLE_TAG));
    let subsample_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let subclusters: Vec<SubCluster> = sample
        .par_iter()
        .map(|&q| build_subcluster(data, q, params.d_max))
        .collect::<Result<_>>()?;
    let lambda1 = match params.lambda1 {
        Some(v) => v,
        None => recommend_lambda(
            &subclusters,
            data.dim(),
            n_total,
            params.noisy,
            params.subspace_dim,
        )?,
    };
    let subclusters_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let raw = build_affinity(&subclusters, lambda1)?;
    let affinity_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let grid = params.grid();
    let (t_max, sub_labels) = select_threshold(&raw, params.k, &grid, substream(seed, SELECT_TAG))?;
    let selection_seconds = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let mut labels = vec![0usize; n_total];
    for (j, &i) in sample.iter().enumerate() {
        labels[i] = sub_labels.labels[j];
    }
    let mut lambda2 = None;
    if sample.len() < n_total {
        let mut in_sample = vec![false; n_total];
        for &i in &sample {
            in_sample[i] = true;
        }
        let rest: Vec<usize> = (0..n_total).filter(|&i| !in_sample[i]).collect();
        let train = Dataset::new(data.points.select_columns(sample.iter()), None)?;
        let pseed = substream(seed, PROJECTOR_TAG);
        let projectors = match params.lambda2 {
            Some(v) => fit_projectors(&train, &sub_labels, params.m, v, pseed)?,
            None => fit_projectors_auto(
                &train,
                &sub_labels,
                params.m,
                params.noisy,
                n_total,
                params.subspace_dim,
                pseed,
            )?,
        };
        lambda2 = Some(projectors.lambda);
        let test = Dataset::new(data.points.select_columns(rest.iter()), None)?;
        let pred = classify(&test, &projectors)?;
        for (j, &i) in rest.iter().enumerate() {
            labels[i] = pred.labels[j];
        }
    }
    let oos_seconds = clock.elapsed().as_secs_f64();

    Ok(RunOutcome {
        labels: LabelVector::new(labels, params.k)?,
        subsample: sample,
        t_max,
        lambda1,
        lambda2,
        times: StageTimes {
            subsample: subsample_seconds,
            subclusters: subclusters_seconds,
            affinity: affinity_seconds,
            selection: selection_seconds,
            oos: oos_seconds,
        },
    })
}

/// One full pipeline run: subsample, sub-clusters, affinity, threshold
/// selection, spectral labels on the subsample, residual-minimization labels
/// for the rest. Returns one label per dataset point.
pub fn run_sbsc_once(data: &Dataset, params: &SBSCParams, seed: u64) -> Result<LabelVector> {
    Ok(run_sbsc_detailed(data, params, seed)?.labels)
}

/// Fraction of points on which `candidate` agrees with `reference` after
/// optimal relabeling.
fn agreement(reference: &LabelVector, candidate: &LabelVector) -> Result<f64> {
    let aligned = align_labels(reference, candidate)?;
    let same = aligned
        .labels
        .iter()
        .zip(reference.labels.iter())
        .filter(|(a, b)| a == b)
        .count();
    Ok(same as f64 / reference.len() as f64)
}

/// Sweeps the sparsification grid and keeps the most stable labeling.
///
/// Every candidate threshold is clustered from the same raw affinity with
/// the same seed; a candidate's stability is its mean aligned agreement with
/// the labelings of its grid neighbors (1.0 for a single-candidate grid).
/// The best scorer wins, ties to the larger threshold.
pub fn select_threshold(
    a: &AffinityMatrix,
    k: usize,
    grid: &[usize],
    seed: u64,
) -> Result<(usize, LabelVector)> {
    if a.state != AffinityState::Raw {
        return Err(Error::BadParams(
            "threshold selection expects a raw affinity".into(),
        ));
    }
    if grid.is_empty() {
        return Err(Error::BadParams("threshold grid is empty".into()));
    }
    let labelings: Vec<LabelVector> = grid
        .iter()
        .map(|&t| spectral_cluster(&symmetrize(sparsify(a.clone(), t)?), k, seed))
        .collect::<Result<_>>()?;

    let mut best: Option<(f64, usize, usize)> = None;
    for (i, &t) in grid.iter().enumerate() {
        let mut sum = 0.0;
        let mut neighbors = 0usize;
        if i > 0 {
            sum += agreement(&labelings[i], &labelings[i - 1])?;
            neighbors += 1;
        }
        if i + 1 < grid.len() {
            sum += agreement(&labelings[i], &labelings[i + 1])?;
            neighbors += 1;
        }
        let score = if neighbors == 0 { 1.0 } else { sum / neighbors as f64 };
        let better = match best {
            None => true,
            Some((bs, bt, _)) => score > bs || (score == bs && t > bt),
        };
        if better {
            best = Some((score, t, i));
        }
    }
    let (_, t, i) = best.expect("grid is nonempty");
    Ok((t, labelings[i].clone()))
}

/// Relabels `candidate` by the label permutation maximizing its agreement
/// with `reference` (optimal assignment on the contingency table).
pub fn align_labels(reference: &LabelVector, candidate: &LabelVector) -> Result<LabelVector> {
    if reference.len() != candidate.len() {
        return Err(Error::LengthMismatch {
            left: reference.len(),
            right: candidate.len(),
        });
    }
    let counts = contingency(&candidate.labels, &reference.labels)?;
    let (mapping, _) = best_assignment(&counts);
    let labels = candidate.labels.iter().map(|&l| mapping[l]).collect();
    LabelVector::new(labels, reference.k.max(candidate.k))
}

/// Per-point majority vote over aligned runs; `aligned[0]` is the reference
/// run, whose label also settles ties.
fn majority_vote(aligned: &[LabelVector], k: usize) -> Vec<usize> {
    let n = aligned[0].len();
    let mut voted = vec![0usize; n];
    let mut counts = vec![0usize; k];
    for i in 0..n {
        counts.iter_mut().for_each(|c| *c = 0);
        for run in aligned {
            counts[run.labels[i]] += 1;
        }
        let top = *counts.iter().max().expect("k >= 1");
        let winners = counts.iter().filter(|&&c| c == top).count();
        voted[i] = if winners == 1 {
            counts.iter().position(|&c| c == top).expect("top exists")
        } else {
            aligned[0].labels[i]
        };
    }
    voted
}

/// Runs the pipeline `params.bags` times with seeds `seed + b`, aligns every
/// run to the first, and majority-votes per point (ties resolved by the
/// first run). Returns the voted labels with the per-run outcomes.
pub fn bag_detailed(data: &Dataset, params: &SBSCParams) -> Result<BagOutcome> {
    params.validate(data)?;
    let mut runs = Vec::with_capacity(params.bags);
    for b in 0..params.bags {
        runs.push(run_sbsc_detailed(data, params, params.seed.wrapping_add(b as u64))?);
    }

    let clock = Instant::now();
    let labels = if params.bags == 1 {
        runs[0].labels.clone()
    } else {
        let reference = &runs[0].labels;
        let mut aligned = vec![reference.clone()];
        for run in &runs[1..] {
            aligned.push(align_labels(reference, &run.labels)?);
        }
        let k = aligned.iter().map(|l| l.k).max().expect("at least one run");
        LabelVector::new(majority_vote(&aligned, k), k)?
    };
    let vote_seconds = clock.elapsed().as_secs_f64();

    Ok(BagOutcome {
        labels,
        runs,
        vote_seconds,
    })
}

/// Bagged SBSC: like [`run_sbsc_once`] repeated `params.bags` times with
/// majority voting. With a single bag this is exactly one run at the master
/// seed.
pub fn bag(data: &Dataset, params: &SBSCParams) -> Result<LabelVector> {
    Ok(bag_detailed(data, params)?.labels)
}
