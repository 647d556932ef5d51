//! Out-of-sample labeling: each unlabeled point goes to the cluster whose
//! sampled training block reconstructs it with the smallest ridge residual.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::ridge_distance::{recommend_lambda_blocks, RidgeKernel};
use crate::spectral::LabelVector;

/// Per-cluster training blocks with cached ridge factorizations.
pub struct ProjectorSet {
    /// `R_k`: one `D x m` training block per cluster.
    pub blocks: Vec<DMatrix<f64>>,
    /// Shared regularization weight.
    pub lambda: f64,
    /// Training-point indices behind each block (into the training set).
    pub sampled: Vec<Vec<usize>>,
    kernels: Vec<RidgeKernel>,
}

impl ProjectorSet {
    /// Number of clusters K.
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// Ambient dimension D.
    pub fn dim(&self) -> usize {
        self.blocks.first().map_or(0, |b| b.nrows())
    }

    /// Ridge reconstruction residuals of one point against every cluster.
    pub fn residuals(&self, y: &DVector<f64>) -> Vec<f64> {
        let y_sq = y.dot(y);
        self.blocks
            .iter()
            .zip(self.kernels.iter())
            .map(|(block, kernel)| {
                let c = block.tr_mul(y);
                let c = DMatrix::from_column_slice(c.len(), 1, c.as_slice());
                kernel.residual_sq(y_sq, &c).sqrt()
            })
            .collect()
    }
}

fn sample_class_indices(
    members: &[usize],
    m: usize,
    rng: &mut ChaCha20Rng,
) -> Vec<usize> {
    let mut chosen: Vec<usize> = if members.len() >= m {
        rand::seq::index::sample(rng, members.len(), m)
            .iter()
            .map(|i| members[i])
            .collect()
    } else {
        (0..m).map(|_| members[rng.random_range(0..members.len())]).collect()
    };
    chosen.sort_unstable();
    chosen
}

fn build_projectors(
    train: &Dataset,
    labels: &LabelVector,
    m: usize,
    lambda: Option<(bool, usize, Option<usize>)>,
    fixed_lambda: Option<f64>,
    seed: u64,
) -> Result<ProjectorSet> {
    if labels.len() != train.len() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: train.len(),
        });
    }
    if m == 0 {
        return Err(Error::BadParams("training sample size m must be >= 1".into()));
    }
    let k = labels.k;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &l) in labels.labels.iter().enumerate() {
        members[l].push(i);
    }
    if let Some(empty) = members.iter().position(|v| v.is_empty()) {
        return Err(Error::EmptyClass(empty));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut sampled = Vec::with_capacity(k);
    let mut blocks = Vec::with_capacity(k);
    for class in members.iter() {
        let idx = sample_class_indices(class, m, &mut rng);
        let block = DMatrix::from_fn(train.dim(), m, |r, c| train.points[(r, idx[c])]);
        sampled.push(idx);
        blocks.push(block);
    }
    let lambda = match (fixed_lambda, lambda) {
        (Some(l), _) => l,
        (None, Some((noisy, n_total, d))) => {
            recommend_lambda_blocks(blocks.iter(), train.dim(), n_total, noisy, d)?
        }
        (None, None) => unreachable!("one lambda source is always supplied"),
    };
    let kernels: Vec<RidgeKernel> = blocks
        .iter()
        .map(|b| RidgeKernel::new(b, lambda))
        .collect::<Result<_>>()?;
    Ok(ProjectorSet {
        blocks,
        lambda,
        sampled,
        kernels,
    })
}

/// Samples `m` training points per cluster and caches their factorizations.
///
/// Classes with at least `m` members are sampled without replacement, smaller
/// classes with replacement. Deterministic in `seed` (classes processed in
/// ascending label order).
pub fn fit_projectors(
    train: &Dataset,
    labels: &LabelVector,
    m: usize,
    lambda: f64,
    seed: u64,
) -> Result<ProjectorSet> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::BadConstants(format!(
            "regularization weight must be finite and positive, got {lambda}"
        )));
    }
    build_projectors(train, labels, m, None, Some(lambda), seed)
}

/// Like [`fit_projectors`], but derives the regularization weight from the
/// sampled blocks themselves (largest spectral score over the K blocks,
/// divided by D when `noisy` or by `n_total` otherwise). Uses the same index
/// substream as `fit_projectors`, so the sampled blocks agree.
pub fn fit_projectors_auto(
    train: &Dataset,
    labels: &LabelVector,
    m: usize,
    noisy: bool,
    n_total: usize,
    d: Option<usize>,
    seed: u64,
) -> Result<ProjectorSet> {
    build_projectors(train, labels, m, Some((noisy, n_total, d)), None, seed)
}

/// Labels every point by minimum ridge residual, ties to the smaller label.
pub fn classify(points: &Dataset, p: &ProjectorSet) -> Result<LabelVector> {
    if points.dim() != p.dim() {
        return Err(Error::LengthMismatch {
            left: points.dim(),
            right: p.dim(),
        });
    }
    if !points.points.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFiniteInput("classify: points"));
    }
    let n = points.len();
    let k = p.k();
    const CHUNK: usize = 4096;
    let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
    let chunks: Vec<Vec<usize>> = starts
        .par_iter()
        .map(|&start| {
            let width = CHUNK.min(n - start);
            let cols = points.points.columns(start, width);
            let mut best_sq = vec![f64::INFINITY; width];
            let mut best_k = vec![0usize; width];
            let y_sq: Vec<f64> = (0..width).map(|j| cols.column(j).norm_squared()).collect();
            for c in 0..k {
                let cross = p.blocks[c].tr_mul(&cols);
                let x = p.kernels[c].solve(&cross);
                for j in 0..width {
                    let r_sq = (y_sq[j]
                        - cross.column(j).dot(&x.column(j))
                        - p.lambda * x.column(j).norm_squared())
                    .max(0.0);
                    if r_sq < best_sq[j] {
                        best_sq[j] = r_sq;
                        best_k[j] = c;
                    }
                }
            }
            best_k
        })
        .collect();
    let labels: Vec<usize> = chunks.into_iter().flatten().collect();
    LabelVector::new(labels, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_detailed, SyntheticSpec};
    use crate::metrics::accuracy;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn dataset_from(cols: Vec<f64>, dim: usize) -> Dataset {
        let n = cols.len() / dim;
        Dataset::new(DMatrix::from_vec(dim, n, cols), None).unwrap()
    }

    fn labeled(labels: Vec<usize>, k: usize) -> LabelVector {
        LabelVector::new(labels, k).unwrap()
    }

    #[test]
    fn forced_sample_when_class_has_exactly_m_points() {
        let train = dataset_from(
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.5f64.sqrt(), 0.5f64.sqrt(), 0.0],
            2,
        );
        let labels = labeled(vec![0, 1, 1, 0], 2);
        for seed in [0u64, 9, 77] {
            let p = fit_projectors(&train, &labels, 2, 0.1, seed).unwrap();
            assert_eq!(p.sampled[0], vec![0, 3]);
            assert_eq!(p.sampled[1], vec![1, 2]);
        }
    }

    #[test]
    fn undersized_class_samples_with_replacement() {
        let train = dataset_from(vec![1.0, 0.0, 0.0, 1.0], 2);
        let labels = labeled(vec![0, 1], 2);
        let p = fit_projectors(&train, &labels, 3, 0.1, 4).unwrap();
        assert_eq!(p.blocks[0].ncols(), 3);
        assert_eq!(p.sampled[0], vec![0, 0, 0]);
        assert_eq!(p.sampled[1], vec![1, 1, 1]);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let cols: Vec<f64> = (0..40).map(|_| rng.sample(StandardNormal)).collect();
        let train = Dataset::new(
            crate::dataset::normalize_columns(DMatrix::from_vec(4, 10, cols)).unwrap(),
            None,
        )
        .unwrap();
        let labels = labeled(vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1], 2);
        let a = fit_projectors(&train, &labels, 3, 0.2, 11).unwrap();
        let b = fit_projectors(&train, &labels, 3, 0.2, 11).unwrap();
        assert_eq!(a.sampled, b.sampled);
    }

    #[test]
    fn empty_class_is_reported() {
        let train = dataset_from(vec![1.0, 0.0, 0.0, 1.0], 2);
        let labels = labeled(vec![0, 0], 3);
        assert!(matches!(
            fit_projectors(&train, &labels, 1, 0.1, 0),
            Err(Error::EmptyClass(1))
        ));
    }

    #[test]
    fn point_in_training_span_gets_that_label() {
        // R_0 spans e1,e2; R_1 spans e3,e4; R_2 spans e5,e6.
        let mut cols = Vec::new();
        for b in 0..3 {
            for c in 0..2 {
                let mut v = vec![0.0; 6];
                v[2 * b + c] = 1.0;
                cols.extend(v);
            }
        }
        let train = dataset_from(cols, 6);
        let labels = labeled(vec![0, 0, 1, 1, 2, 2], 3);
        let p = fit_projectors(&train, &labels, 2, 1e-6, 0).unwrap();
        let probe = dataset_from(vec![0.0, 0.0, 0.6, 0.8, 0.0, 0.0], 6);
        let got = classify(&probe, &p).unwrap();
        assert_eq!(got.labels, vec![1]);
        let r = p.residuals(&DVector::from_column_slice(&[0.0, 0.0, 0.6, 0.8, 0.0, 0.0]));
        assert!(r[1] < 1e-5 && r[0] > 0.9 && r[2] > 0.9);
    }

    #[test]
    fn identical_blocks_tie_to_smaller_label() {
        let train = dataset_from(vec![1.0, 0.0, 1.0, 0.0], 2);
        let labels = labeled(vec![0, 1], 2);
        let p = fit_projectors(&train, &labels, 1, 0.5, 0).unwrap();
        let probe = dataset_from(vec![0.6, 0.8], 2);
        let got = classify(&probe, &p).unwrap();
        assert_eq!(got.labels, vec![0]);
    }

    #[test]
    fn matches_explicit_inverse_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        for trial in 0..50 {
            let (dim, k, m) = (6usize, 3usize, 2usize);
            let cols: Vec<f64> = (0..dim * k * m).map(|_| rng.sample(StandardNormal)).collect();
            let train = Dataset::new(
                crate::dataset::normalize_columns(DMatrix::from_vec(dim, k * m, cols)).unwrap(),
                None,
            )
            .unwrap();
            let labels = labeled(vec![0, 0, 1, 1, 2, 2], k);
            let lambda = 10f64.powf(rng.random_range(-3.0..0.0));
            let p = fit_projectors(&train, &labels, m, lambda, trial).unwrap();

            let probe_cols: Vec<f64> = (0..dim * 5).map(|_| rng.sample(StandardNormal)).collect();
            let probe = Dataset::new(
                crate::dataset::normalize_columns(DMatrix::from_vec(dim, 5, probe_cols)).unwrap(),
                None,
            )
            .unwrap();
            let got = classify(&probe, &p).unwrap();

            for j in 0..probe.len() {
                let y = probe.points.column(j);
                let mut best = (f64::INFINITY, 0usize);
                for (c, block) in p.blocks.iter().enumerate() {
                    let g = block.tr_mul(block) + DMatrix::<f64>::identity(m, m) * lambda;
                    let inv = g.try_inverse().unwrap();
                    let r = (y - block * inv * block.tr_mul(&y)).norm();
                    if r < best.0 - 1e-12 {
                        best = (r, c);
                    }
                }
                assert_eq!(got.labels[j], best.1, "trial {trial} point {j}");
            }
        }
    }

    #[test]
    fn labels_invariant_to_positive_scaling_of_points() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let cols: Vec<f64> = (0..5 * 6).map(|_| rng.sample(StandardNormal)).collect();
        let train = Dataset::new(
            crate::dataset::normalize_columns(DMatrix::from_vec(5, 6, cols)).unwrap(),
            None,
        )
        .unwrap();
        let labels = labeled(vec![0, 0, 0, 1, 1, 1], 2);
        let p = fit_projectors(&train, &labels, 2, 0.05, 1).unwrap();
        let probe_cols: Vec<f64> = (0..5 * 8).map(|_| rng.sample(StandardNormal)).collect();
        let probe = dataset_from(probe_cols.clone(), 5);
        let scaled = dataset_from(probe_cols.iter().map(|v| v * 37.5).collect(), 5);
        assert_eq!(
            classify(&probe, &p).unwrap().labels,
            classify(&scaled, &p).unwrap().labels
        );
    }

    #[test]
    fn residuals_are_bounded_by_point_norm() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let cols: Vec<f64> = (0..4 * 6).map(|_| rng.sample(StandardNormal)).collect();
        let train = Dataset::new(
            crate::dataset::normalize_columns(DMatrix::from_vec(4, 6, cols)).unwrap(),
            None,
        )
        .unwrap();
        let labels = labeled(vec![0, 0, 0, 1, 1, 1], 2);
        let p = fit_projectors(&train, &labels, 2, 0.3, 5).unwrap();
        for _ in 0..20 {
            let y = DVector::<f64>::from_fn(4, |_, _| rng.sample(StandardNormal));
            let y = &y / y.norm();
            for r in p.residuals(&y) {
                assert!((0.0..=1.0 + 1e-12).contains(&r));
            }
        }
    }

    #[test]
    fn exact_recovery_on_noiseless_separated_subspaces() {
        for seed in 0..10u64 {
            let spec = SyntheticSpec {
                k: 3,
                d: 5,
                dim: 50,
                counts: vec![200; 3],
                sigma: 0.0,
                seed,
            };
            let inst = generate_synthetic_detailed(&spec).unwrap();
            let data = inst.dataset;
            let truth = labeled(data.labels.clone().unwrap(), 3);
            let p = fit_projectors_auto(&data, &truth, 10, false, data.len(), Some(5), seed).unwrap();
            let got = classify(&data, &p).unwrap();
            assert_eq!(
                accuracy(&got.labels, &truth.labels).unwrap(),
                1.0,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let train = dataset_from(vec![1.0, 0.0, 0.0, 1.0], 2);
        let labels = labeled(vec![0, 1], 2);
        let p = fit_projectors(&train, &labels, 1, 0.1, 0).unwrap();
        let probe = dataset_from(vec![1.0, 0.0, 0.0], 3);
        assert!(matches!(
            classify(&probe, &p),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
