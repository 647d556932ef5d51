//! Clustering evaluation: accuracy under the best label permutation and
//! normalized mutual information.

use crate::assignment::{best_assignment, contingency};
use crate::error::Result;

/// Fraction of points on which the two labelings agree after the candidate
/// labels are permuted optimally, i.e.
/// `max_pi (1/N) sum_i 1{pi(pred_i) = truth_i}`.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let counts = contingency(pred, truth)?;
    let (_, agreement) = best_assignment(&counts);
    Ok(agreement as f64 / pred.len() as f64)
}

/// Normalization used for mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NmiNormalization {
    /// Divide by `sqrt(H(pred) * H(truth))` (default).
    Geometric,
    /// Divide by `(H(pred) + H(truth)) / 2`.
    Arithmetic,
}

/// Normalized mutual information with the geometric-mean normalization.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    nmi_with(pred, truth, NmiNormalization::Geometric)
}

/// Normalized mutual information with a selectable normalization.
///
/// Degenerate conventions: when both labelings are the identical single
/// partition (either entropy 0 on both sides and the tables agree) the score
/// is 1.0; when exactly the normalizer degenerates to 0 otherwise, the score
/// is 0.0. Output clamped to [0, 1] against round-off.
pub fn nmi_with(pred: &[usize], truth: &[usize], norm: NmiNormalization) -> Result<f64> {
    let counts = contingency(pred, truth)?;
    let n = pred.len() as f64;
    let k = counts.len();
    let row: Vec<i64> = counts.iter().map(|r| r.iter().sum()).collect();
    let col: Vec<i64> = (0..k).map(|j| counts.iter().map(|r| r[j]).sum()).collect();

    let entropy = |marginal: &[i64]| -> f64 {
        marginal
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.ln()
            })
            .sum()
    };
    let h_pred = entropy(&row);
    let h_truth = entropy(&col);

    if h_pred == 0.0 && h_truth == 0.0 {
        // Both constant: identical single-cluster partitions.
        return Ok(1.0);
    }
    if h_pred == 0.0 || h_truth == 0.0 {
        return Ok(0.0);
    }

    let mut mi = 0.0;
    for (i, r) in counts.iter().enumerate() {
        for (j, &c) in r.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p * n * n / (row[i] as f64 * col[j] as f64)).ln();
            }
        }
    }
    let denom = match norm {
        NmiNormalization::Geometric => (h_pred * h_truth).sqrt(),
        NmiNormalization::Arithmetic => 0.5 * (h_pred + h_truth),
    };
    Ok((mi / denom).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn permutations(k: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut items: Vec<usize> = (0..k).collect();
        fn rec(items: &mut Vec<usize>, fixed: usize, out: &mut Vec<Vec<usize>>) {
            if fixed == items.len() {
                out.push(items.clone());
                return;
            }
            for i in fixed..items.len() {
                items.swap(fixed, i);
                rec(items, fixed + 1, out);
                items.swap(fixed, i);
            }
        }
        rec(&mut items, 0, &mut out);
        out
    }

    /// Factorial-enumeration accuracy, usable for K <= 4.
    fn accuracy_bruteforce(pred: &[usize], truth: &[usize]) -> f64 {
        let k = 1 + pred.iter().chain(truth.iter()).copied().max().unwrap();
        permutations(k)
            .into_iter()
            .map(|pi| {
                let hits = pred
                    .iter()
                    .zip(truth.iter())
                    .filter(|&(&p, &t)| pi[p] == t)
                    .count();
                hits as f64 / pred.len() as f64
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn accuracy_identity_and_permutation() {
        let truth = vec![0, 0, 1, 1, 2];
        assert_eq!(accuracy(&truth, &truth).unwrap(), 1.0);
        let swapped = vec![2, 2, 0, 0, 1];
        assert_eq!(accuracy(&swapped, &truth).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_small_example() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 1, 1, 1];
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.75);
        assert_eq!(accuracy_bruteforce(&pred, &truth), 0.75);
    }

    #[test]
    fn accuracy_matches_bruteforce_on_random_inputs() {
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        for _ in 0..200 {
            let k = rng.random_range(2..=4);
            let len = rng.random_range(1..=30);
            let pred: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
            let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
            let fast = accuracy(&pred, &truth).unwrap();
            let slow = accuracy_bruteforce(&pred, &truth);
            assert_eq!(fast, slow, "pred {pred:?} truth {truth:?}");
        }
    }

    #[test]
    fn constant_prediction_scores_majority_share() {
        let truth = vec![0, 0, 0, 1, 1, 2];
        let pred = vec![1, 1, 1, 1, 1, 1];
        assert_eq!(accuracy(&pred, &truth).unwrap(), 0.5);
    }

    #[test]
    fn accuracy_rejects_unequal_lengths() {
        assert!(matches!(
            accuracy(&[0, 1], &[0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn nmi_perfect_and_permuted() {
        let truth = vec![0, 0, 1, 1, 2, 2];
        assert!((nmi(&truth, &truth).unwrap() - 1.0).abs() < 1e-12);
        let permuted = vec![1, 1, 2, 2, 0, 0];
        assert!((nmi(&permuted, &truth).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nmi_zero_for_constant_prediction() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 0, 0, 0];
        assert_eq!(nmi(&pred, &truth).unwrap(), 0.0);
    }

    #[test]
    fn nmi_one_for_identical_single_cluster() {
        assert_eq!(nmi(&[0, 0, 0], &[0, 0, 0]).unwrap(), 1.0);
    }

    #[test]
    fn nmi_zero_for_independent_partitions() {
        let truth = vec![0, 0, 1, 1];
        let pred = vec![0, 1, 0, 1];
        assert!(nmi(&pred, &truth).unwrap().abs() < 1e-12);
    }

    #[test]
    fn nmi_stays_in_unit_interval() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        for _ in 0..300 {
            let k = rng.random_range(1..=5);
            let len = rng.random_range(1..=40);
            let pred: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
            let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..k)).collect();
            for norm in [NmiNormalization::Geometric, NmiNormalization::Arithmetic] {
                let v = nmi_with(&pred, &truth, norm).unwrap();
                assert!((0.0..=1.0).contains(&v), "nmi {v} outside [0,1]");
            }
        }
    }

    #[test]
    fn metrics_are_symmetric_under_relabeling() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        for _ in 0..50 {
            let len = rng.random_range(2..=25);
            let pred: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
            let truth: Vec<usize> = (0..len).map(|_| rng.random_range(0..3)).collect();
            let relabel = |v: &[usize]| -> Vec<usize> { v.iter().map(|&x| (x + 1) % 3).collect() };
            assert_eq!(
                accuracy(&pred, &truth).unwrap(),
                accuracy(&relabel(&pred), &truth).unwrap()
            );
            let base = nmi(&pred, &truth).unwrap();
            assert!((nmi(&relabel(&pred), &truth).unwrap() - base).abs() < 1e-12);
            assert!((nmi(&pred, &relabel(&truth)).unwrap() - base).abs() < 1e-12);
        }
    }
}
