//! Probability lower bounds for the three pipeline stages (sub-cluster
//! purity, neighborhood ordering of the affinity, out-of-sample labeling)
//! and seeded Monte-Carlo validation of the concentration inequalities
//! behind them.
//!
//! Bound evaluation is pure; the Monte-Carlo checks draw per-trial
//! substreams so estimates reproduce exactly regardless of thread count.
//! Raw bounds are reported next to their [0,1] clamp: at desk scale they are
//! usually vacuous (deeply negative), and hiding that would misrepresent
//! what the formulas say.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::substream;

/// Exponent of the quantile argument in the order-statistic bound.
pub const RHO: f64 = 0.9;

/// Sizes and constants feeding the probability bounds.
///
/// `pair_cosines` holds the principal-angle cosines of every unordered
/// subspace pair, each vector sorted descending; the per-cluster maximal
/// affinity vector is their elementwise maximum over the pairs containing
/// that cluster.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryParams {
    /// Subspace dimension d.
    pub d: usize,
    /// Ambient dimension D.
    pub dim: usize,
    /// Number of subspaces K.
    pub k: usize,
    /// Points per cluster N_j.
    pub counts: Vec<usize>,
    /// Subsampled points per cluster n_j.
    pub sampled: Vec<usize>,
    /// Neighbors per sub-cluster.
    pub d_max: usize,
    /// Total subsample size n.
    pub n: usize,
    /// Residual-minimization sample size per cluster.
    pub m: usize,
    /// Principal-angle cosines per unordered pair (j < l), in the order
    /// (0,1), (0,2), ..., (0,K-1), (1,2), ...; d descending values each.
    pub pair_cosines: Vec<Vec<f64>>,
    /// Affinity threshold constant.
    pub g1: f64,
    /// Noise-norm ceiling; 0 for noiseless data.
    pub g2: f64,
    /// Concentration constant, > 1.
    pub c1: f64,
    /// Margin constant, > 1.
    pub c2: f64,
    /// Dominance constant, > 1.
    pub c3: f64,
    /// Inverse-Gram norm ceiling.
    pub q0: f64,
    /// Tail exponent of the purity bound.
    pub eta1: f64,
    /// Tail exponent of the neighborhood bound.
    pub eta2: f64,
    /// Tail exponent of the labeling bound.
    pub eta3: f64,
    /// Noise scale of the data model.
    pub sigma: f64,
}

impl TheoryParams {
    /// Total point count N.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// The separation threshold T = (4 g2 + 2 g2^2)/(1 - g2)
    /// + g1 (1 + g2)/(1 - g2).
    pub fn t_constant(&self) -> f64 {
        (4.0 * self.g2 + 2.0 * self.g2 * self.g2) / (1.0 - self.g2)
            + self.g1 * (1.0 + self.g2) / (1.0 - self.g2)
    }

    fn pair_index(&self, j: usize, l: usize) -> usize {
        let (a, b) = if j < l { (j, l) } else { (l, j) };
        a * (2 * self.k - a - 1) / 2 + (b - a - 1)
    }

    /// Principal-angle cosines between clusters `j` and `l`.
    pub fn cosines(&self, j: usize, l: usize) -> &[f64] {
        &self.pair_cosines[self.pair_index(j, l)]
    }

    /// Maximal affinity vector of cluster `j`: elementwise maximum of its
    /// cosine vectors against every other cluster.
    pub fn max_affinity(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0f64; self.d];
        for l in 0..self.k {
            if l == j {
                continue;
            }
            for (o, &c) in out.iter_mut().zip(self.cosines(j, l)) {
                *o = (*o).max(c);
            }
        }
        out
    }

    /// Structural validity of the sizes and constants.
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::BadParams("need at least 2 subspaces".into()));
        }
        if self.d < 1 || self.dim < self.d {
            return Err(Error::BadParams(format!(
                "need 1 <= d <= D, got d={} D={}",
                self.d, self.dim
            )));
        }
        if self.counts.len() != self.k || self.sampled.len() != self.k {
            return Err(Error::LengthMismatch {
                left: self.counts.len().min(self.sampled.len()),
                right: self.k,
            });
        }
        if let Some(bad) = self.counts.iter().position(|&c| c < 2) {
            return Err(Error::BadParams(format!("cluster {bad} has fewer than 2 points")));
        }
        for (j, (&nj, &cj)) in self.sampled.iter().zip(self.counts.iter()).enumerate() {
            if nj > cj {
                return Err(Error::BadParams(format!(
                    "cluster {j} samples {nj} of {cj} points"
                )));
            }
        }
        if self.sampled.iter().sum::<usize>() != self.n {
            return Err(Error::BadParams("per-cluster samples do not sum to n".into()));
        }
        if self.d_max < 1 || self.counts.iter().any(|&c| self.d_max > c - 1) {
            return Err(Error::BadParams(format!(
                "d_max = {} must stay within every cluster",
                self.d_max
            )));
        }
        if self.m < 1 {
            return Err(Error::BadParams("m must be at least 1".into()));
        }
        let expected_pairs = self.k * (self.k - 1) / 2;
        if self.pair_cosines.len() != expected_pairs {
            return Err(Error::LengthMismatch {
                left: self.pair_cosines.len(),
                right: expected_pairs,
            });
        }
        for (p, v) in self.pair_cosines.iter().enumerate() {
            if v.len() != self.d {
                return Err(Error::BadParams(format!(
                    "cosine vector {p} has length {}, expected {}",
                    v.len(),
                    self.d
                )));
            }
            check_cosines(v)?;
        }
        if !(self.g1.is_finite() && self.g1 > 0.0) {
            return Err(Error::BadConstants(format!("g1 must be positive, got {}", self.g1)));
        }
        if !(self.g2.is_finite() && (0.0..1.0).contains(&self.g2)) {
            return Err(Error::BadConstants(format!("g2 must lie in [0, 1), got {}", self.g2)));
        }
        for (name, v) in [("c1", self.c1), ("c2", self.c2), ("c3", self.c3)] {
            if !(v.is_finite() && v > 1.0) {
                return Err(Error::BadConstants(format!("{name} must exceed 1, got {v}")));
            }
        }
        for (name, v) in [
            ("q0", self.q0),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::BadConstants(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::BadConstants(format!(
                "sigma must be nonnegative, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

fn check_cosines(v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::BadParams("empty cosine vector".into()));
    }
    if !v.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)) {
        return Err(Error::BadParams("cosines must lie in [0, 1]".into()));
    }
    if v.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::BadParams("cosines must be sorted descending".into()));
    }
    Ok(())
}

/// The deviation scale behind all three bounds:
/// epsilon = (1 - 1/c3) sqrt(d) / (2 c1 + sqrt(4 c1^2 + 2 c2)).
pub fn epsilon_from_constants(c1: f64, c2: f64, c3: f64, d: usize) -> Result<f64> {
    for (name, v) in [("c1", c1), ("c2", c2), ("c3", c3)] {
        if !(v.is_finite() && v > 1.0) {
            return Err(Error::BadConstants(format!("{name} must exceed 1, got {v}")));
        }
    }
    if d < 1 {
        return Err(Error::BadConstants("d must be at least 1".into()));
    }
    Ok((1.0 - 1.0 / c3) * (d as f64).sqrt() / (2.0 * c1 + (4.0 * c1 * c1 + 2.0 * c2).sqrt()))
}

/// A concentration bound next to its seeded Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MonteCarloCheck {
    /// Deviation scale, when the bound has one.
    pub epsilon: Option<f64>,
    /// Stated probability bound (may exceed 1, i.e. be vacuous).
    pub bound: f64,
    /// Monte-Carlo estimate of the deviation probability.
    pub empirical: f64,
    /// Binomial standard error of the estimate.
    pub stderr: f64,
    /// Whether empirical <= bound + 3 stderr.
    pub holds: bool,
}

/// Fraction of trials where `event` fires, with its standard error. Each
/// trial draws from its own substream, so the estimate is independent of
/// scheduling.
fn mc_fraction<F>(trials: usize, seed: u64, event: F) -> (f64, f64)
where
    F: Fn(&mut ChaCha20Rng) -> bool + Sync,
{
    let hits = (0..trials as u64)
        .into_par_iter()
        .filter(|&t| {
            let mut rng = ChaCha20Rng::seed_from_u64(substream(seed, t));
            event(&mut rng)
        })
        .count();
    let p = hits as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    (p, se)
}

fn finish_check(epsilon: Option<f64>, bound: f64, trials: usize, seed: u64, event: impl Fn(&mut ChaCha20Rng) -> bool + Sync) -> MonteCarloCheck {
    let (empirical, stderr) = mc_fraction(trials, seed, event);
    MonteCarloCheck {
        epsilon,
        bound,
        empirical,
        stderr,
        holds: empirical <= bound + 3.0 * stderr,
    }
}

/// Deviation bound for weighted coordinates of a uniform sphere point.
///
/// For `b` uniform on the unit sphere of dimension `lambdas.len()` and
/// weights `1 >= lambda_1 >= ... >= lambda_d >= 0`, bounds the probability
/// that `sum (lambda_i b_i)^2 >= g1^2` by `2 exp(-epsilon^2)` with epsilon
/// from the positive/negative parts r_i = (g1^2 - lambda_i^2)_+ and
/// s_i = (lambda_i^2 - g1^2)_+, then estimates that probability over
/// `trials` sphere draws. Requires sum(r) >= sum(s); the equality case
/// yields epsilon = 0 and the vacuous bound 2.
pub fn lemma1_check(lambdas: &[f64], g1: f64, trials: usize, seed: u64) -> Result<MonteCarloCheck> {
    check_cosines(lambdas)?;
    if !(g1.is_finite() && g1 > 0.0) {
        return Err(Error::BadConstants(format!("g1 must be positive, got {g1}")));
    }
    if trials == 0 {
        return Err(Error::BadParams("need at least one trial".into()));
    }
    let g1_sq = g1 * g1;
    let r: Vec<f64> = lambdas.iter().map(|l| (g1_sq - l * l).max(0.0)).collect();
    let s: Vec<f64> = lambdas.iter().map(|l| (l * l - g1_sq).max(0.0)).collect();
    let sum_r: f64 = r.iter().sum();
    let sum_s: f64 = s.iter().sum();
    if sum_r < sum_s {
        return Err(Error::AssumptionViolated(format!(
            "positive parts sum to {sum_r:.6}, below the negative parts {sum_s:.6}; \
             the deviation bound does not apply"
        )));
    }
    let diff = sum_r - sum_s;
    let norm_r = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let norm_s = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s_max = s.iter().cloned().fold(0.0, f64::max);
    let base = norm_r + norm_s;
    let epsilon = if diff == 0.0 {
        0.0
    } else {
        diff / (base + (base * base + 2.0 * s_max * diff).sqrt())
    };
    let bound = 2.0 * (-epsilon * epsilon).exp();

    let weights: Vec<f64> = lambdas.iter().map(|l| l * l).collect();
    Ok(finish_check(Some(epsilon), bound, trials, seed, move |rng| {
        let mut weighted = 0.0;
        let mut total = 0.0;
        for &w in &weights {
            let z: f64 = rng.sample(StandardNormal);
            weighted += w * z * z;
            total += z * z;
        }
        weighted >= g1_sq * total
    }))
}

/// Tail bound for an F(m, n) variable: P[X >= q] <= 2 exp(-epsilon^2) with
/// epsilon = ( -(sqrt(m) + q m / sqrt(n))
///             + sqrt((sqrt(m) + q m / sqrt(n))^2 + 2 m (q - 1)) ) / 2,
/// estimated over `trials` draws built from chi-square ratios. `q = 1`
/// gives the vacuous bound 2.
pub fn corollary1_check(m: usize, n: usize, q: f64, trials: usize, seed: u64) -> Result<MonteCarloCheck> {
    if m < 2 || n < 2 {
        return Err(Error::BadConstants(format!(
            "degrees of freedom must be at least 2, got m={m} n={n}"
        )));
    }
    if !(q.is_finite() && q >= 1.0) {
        return Err(Error::BadConstants(format!("q must be at least 1, got {q}")));
    }
    if trials == 0 {
        return Err(Error::BadParams("need at least one trial".into()));
    }
    let (mf, nf) = (m as f64, n as f64);
    let a = mf.sqrt() + q * mf / nf.sqrt();
    let epsilon = 0.5 * (-a + (a * a + 2.0 * mf * (q - 1.0)).sqrt());
    let bound = 2.0 * (-epsilon * epsilon).exp();

    Ok(finish_check(Some(epsilon), bound, trials, seed, move |rng| {
        let mut num = 0.0;
        for _ in 0..m {
            let z: f64 = rng.sample(StandardNormal);
            num += z * z;
        }
        let mut den = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            den += z * z;
        }
        den == 0.0 || num * nf >= q * mf * den
    }))
}

/// Whether the separation inequality
/// `2 (1 - t^2)^((d-1)/2) >= sqrt(2 pi d) d_max / n_j^(9/10)` holds.
pub fn beta_quantile_holds(t: f64, d: usize, d_max: usize, n_j: usize) -> bool {
    let base = (1.0 - t * t).max(0.0);
    let lhs = 2.0 * base.powf((d as f64 - 1.0) / 2.0);
    let rhs = (2.0 * std::f64::consts::PI * d as f64).sqrt() * d_max as f64
        / (n_j as f64).powf(RHO);
    lhs >= rhs
}

/// Monte-Carlo check of the order-statistic bound: the probability that the
/// (n_j - d_max)-th smallest of n_j - 1 Beta(1/2, (d-1)/2) draws falls at or
/// below `t_sq` is bounded by
/// (n_j - d_max) / (d_max (n_j + 1) (n_j^(1/10) - 1)^2).
pub fn lemma3_mc(
    d: usize,
    d_max: usize,
    n_j: usize,
    t_sq: f64,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloCheck> {
    if d < 2 {
        return Err(Error::BadParams("need d >= 2 for the beta model".into()));
    }
    if n_j < 2 || d_max < 1 || d_max > n_j - 1 {
        return Err(Error::BadParams(format!(
            "need 1 <= d_max <= n_j - 1, got d_max={d_max} n_j={n_j}"
        )));
    }
    if !(0.0..=1.0).contains(&t_sq) {
        return Err(Error::BadParams(format!("t_sq must lie in [0, 1], got {t_sq}")));
    }
    if trials == 0 {
        return Err(Error::BadParams("need at least one trial".into()));
    }
    let njf = n_j as f64;
    let bound = (njf - d_max as f64)
        / (d_max as f64 * (njf + 1.0) * (njf.powf(0.1) - 1.0).powi(2));
    let beta = Beta::new(0.5, (d as f64 - 1.0) / 2.0)
        .map_err(|e| Error::BadParams(format!("beta distribution: {e}")))?;
    let need = n_j - d_max;

    Ok(finish_check(None, bound, trials, seed, move |rng| {
        let mut at_or_below = 0usize;
        for _ in 0..n_j - 1 {
            if beta.sample(rng) <= t_sq {
                at_or_below += 1;
            }
        }
        at_or_below >= need
    }))
}

/// A probability lower bound before and after clamping to [0, 1].
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundValue {
    /// The formula's value; often negative at desk scale.
    pub raw: f64,
    /// `raw` clamped to [0, 1] for reporting.
    pub clamped: f64,
}

impl BoundValue {
    fn from_raw(raw: f64) -> Self {
        Self {
            raw,
            clamped: raw.clamp(0.0, 1.0),
        }
    }
}

/// The three stage bounds with their shared deviation scale.
#[derive(Debug, Clone, Serialize)]
pub struct BoundReport {
    /// Deviation scale from (c1, c2, c3, d).
    pub epsilon: f64,
    /// Separation threshold T from (g1, g2).
    pub t_constant: f64,
    /// Sub-cluster purity bound.
    pub p1: BoundValue,
    /// Affinity neighborhood-ordering bound.
    pub p2: BoundValue,
    /// Out-of-sample labeling bound.
    pub p3: BoundValue,
}

/// Numeric preconditions that fail for `tp`, as human-readable findings.
/// Asymptotic regime statements (growth orders) have no finite-size check
/// and are not represented; conditions involving the noise level apply only
/// when sigma > 0.
pub fn check_assumptions(tp: &TheoryParams) -> Result<Vec<String>> {
    tp.validate()?;
    let mut failed = Vec::new();
    let d = tp.d as f64;
    let dim = tp.dim as f64;
    let t = tp.t_constant();
    let noisy = tp.sigma > 0.0;

    for j in 0..tp.k {
        let lambdas = tp.max_affinity(j);
        let base = (1.0 - t * t).max(0.0);
        let lhs = 2.0 * base.powf((d - 1.0) / 2.0);
        let rhs = (2.0 * std::f64::consts::PI * d).sqrt() * tp.d_max as f64
            / (tp.counts[j] as f64).powf(RHO);
        if lhs < rhs {
            failed.push(format!(
                "separation (cluster {j}): 2(1-T^2)^((d-1)/2) = {lhs:.3e} < {rhs:.3e}"
            ));
        }
        for (tag, tau_sq) in [("g1^2", tp.g1 * tp.g1), ("2/5", 0.4)] {
            let r: Vec<f64> = lambdas.iter().map(|l| (tau_sq - l * l).max(0.0)).collect();
            let s: Vec<f64> = lambdas.iter().map(|l| (l * l - tau_sq).max(0.0)).collect();
            let sum_r: f64 = r.iter().sum();
            let sum_s: f64 = s.iter().sum();
            let sum_r2: f64 = r.iter().map(|x| x * x).sum();
            let sum_s2: f64 = s.iter().map(|x| x * x).sum();
            if sum_r < (d * sum_r2).sqrt() / tp.c1 {
                failed.push(format!(
                    "affinity margin at {tag} (cluster {j}): sum r = {sum_r:.4} < sqrt(d sum r^2)/c1 = {:.4}",
                    (d * sum_r2).sqrt() / tp.c1
                ));
            }
            if sum_r < d / tp.c2 {
                failed.push(format!(
                    "affinity margin at {tag} (cluster {j}): sum r = {sum_r:.4} < d/c2 = {:.4}",
                    d / tp.c2
                ));
            }
            if sum_r2 <= sum_s2 {
                failed.push(format!(
                    "affinity spread at {tag} (cluster {j}): sum r^2 = {sum_r2:.4} <= sum s^2 = {sum_s2:.4}"
                ));
            }
            if sum_r <= tp.c3 * sum_s {
                failed.push(format!(
                    "affinity dominance at {tag} (cluster {j}): sum r = {sum_r:.4} <= c3 sum s = {:.4}",
                    tp.c3 * sum_s
                ));
            }
        }
    }

    if noisy {
        let g2_sq = tp.g2 * tp.g2;
        let ratio = g2_sq / (dim * tp.sigma * tp.sigma);
        if ratio <= 1.0 {
            failed.push(format!("noise ceiling: g2^2/(D sigma^2) = {ratio:.4} <= 1"));
        } else {
            let lhs = dim * (ratio - 1.0)
                / (dim.sqrt()
                    + g2_sq / (tp.sigma * d.sqrt())
                    + dim.sqrt() * g2_sq / (d.sqrt() * tp.sigma * tp.sigma));
            let rhs = (d * (1.0 + tp.eta1) / 5.0).sqrt();
            if lhs < rhs {
                failed.push(format!(
                    "noise concentration: {lhs:.4} < sqrt(d(1+eta1)/5) = {rhs:.4}"
                ));
            }
        }

        let dp1 = (tp.d_max + 1) as f64;
        let lam6 = 1.0 / (3.0 * tp.q0 * (15.0 * d * dp1).sqrt());
        let g6 = 1.0 / (3.0 * (15.0 * dim * dp1).sqrt());
        let q6 = lam6 * g6 / (3.0 * dim * dim.sqrt() * tp.sigma * dp1);
        if q6 <= 1.0 {
            failed.push(format!("distance regularization margin: q = {q6:.4e} <= 1"));
        } else {
            let lhs = dim * (q6 - 1.0) / (2.0 * (dim.sqrt() + dim * q6 / d.sqrt() + d.sqrt()));
            let rhs = (d * (1.0 + tp.eta2) / 5.0).sqrt();
            if lhs <= rhs {
                failed.push(format!(
                    "distance regularization concentration: {lhs:.4} <= sqrt(d(1+eta2)/5) = {rhs:.4}"
                ));
            }
        }

        let mf = tp.m as f64;
        let lam9 = 1.0 / (tp.q0 * (d * mf).sqrt());
        let g9 = 1.0 / (dim * mf).sqrt();
        let q9 = lam9 * g9 / (3.0 * dim * dim.sqrt() * tp.sigma * mf);
        if q9 <= 1.0 {
            failed.push(format!("classifier regularization margin: q = {q9:.4e} <= 1"));
        } else {
            let lhs = dim * (q9 - 1.0) / (2.0 * (dim.sqrt() + dim * q9 / d.sqrt() + d.sqrt()));
            let rhs = (d * (1.0 + tp.eta3) / 5.0).sqrt();
            if lhs <= rhs {
                failed.push(format!(
                    "classifier regularization concentration: {lhs:.4} <= sqrt(d(1+eta3)/5) = {rhs:.4}"
                ));
            }
        }
    }

    let coverage = tp.n * (tp.d_max + 1);
    if coverage > tp.total() {
        failed.push(format!(
            "sub-cluster coverage: n(d_max+1) = {coverage} exceeds N = {}",
            tp.total()
        ));
    }

    Ok(failed)
}

/// The three bound formulas at a given deviation scale, without any
/// admissibility gating. Noiseless inputs (sigma = 0) use the 2/3 exponent
/// in the purity bound's order-statistic term and drop the tail terms of
/// the first two bounds; the labeling bound has no published noiseless
/// reduction and is evaluated verbatim.
fn bound_formulas(tp: &TheoryParams, epsilon: f64) -> (f64, f64, f64) {
    let noisy = tp.sigma > 0.0;
    let e2 = (-epsilon * epsilon).exp();
    let total = tp.total() as f64;
    let kf = tp.k as f64;
    let nf = tp.n as f64;
    let tail = |eta: f64| 2.0 * total / (total.powf(1.0 + eta) - 2.0);

    let exponent = if noisy { 0.1 } else { 2.0 / 3.0 };
    let mut order_stat_sum = 0.0;
    for (&n_j, &cap) in tp.sampled.iter().zip(tp.counts.iter()) {
        let njf = cap as f64;
        order_stat_sum += n_j as f64 * (njf - tp.d_max as f64)
            / (tp.d_max as f64 * (njf + 1.0) * (njf.powf(exponent) - 1.0).powi(2));
    }
    let p1 = 1.0 - order_stat_sum - 2.0 * (kf - 1.0) * nf * e2 - if noisy { tail(tp.eta1) } else { 0.0 };
    let p2 = 1.0 - 4.0 * nf * (nf - 1.0) * e2 - if noisy { tail(tp.eta2) } else { 0.0 };
    let p3 = 1.0 - 2.0 * (kf - 1.0) * (total - nf * (tp.d_max as f64 + 1.0)) * e2 - tail(tp.eta3);
    (p1, p2, p3)
}

/// Evaluates the three stage bounds for an admissible configuration.
///
/// Fails with the full list of violated numeric preconditions when the
/// configuration is inadmissible; otherwise reports each bound raw and
/// clamped to [0, 1].
pub fn theorem_bounds(tp: &TheoryParams) -> Result<BoundReport> {
    let failed = check_assumptions(tp)?;
    if !failed.is_empty() {
        return Err(Error::AssumptionViolated(failed.join("; ")));
    }
    let epsilon = epsilon_from_constants(tp.c1, tp.c2, tp.c3, tp.d)?;
    let (p1, p2, p3) = bound_formulas(tp, epsilon);
    Ok(BoundReport {
        epsilon,
        t_constant: tp.t_constant(),
        p1: BoundValue::from_raw(p1),
        p2: BoundValue::from_raw(p2),
        p3: BoundValue::from_raw(p3),
    })
}

/// Principal-angle cosines between the column spans of two orthonormal
/// bases with a shared ambient dimension: the singular values of `a' b`,
/// sorted descending and clamped to [0, 1].
pub fn principal_cosines(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::LengthMismatch {
            left: a.nrows(),
            right: b.nrows(),
        });
    }
    if a.ncols() == 0 || b.ncols() == 0 {
        return Err(Error::BadParams("empty basis".into()));
    }
    let svd = a.tr_mul(b).svd(false, false);
    let mut vals: Vec<f64> = svd.singular_values.iter().map(|s| s.clamp(0.0, 1.0)).collect();
    vals.sort_by(|x, y| y.total_cmp(x));
    Ok(vals)
}

/// Cosine vectors for every unordered basis pair, in the pair order
/// [`TheoryParams::pair_cosines`] expects.
pub fn pair_cosines_from_bases(bases: &[DMatrix<f64>]) -> Result<Vec<Vec<f64>>> {
    if bases.len() < 2 {
        return Err(Error::BadParams("need at least 2 bases".into()));
    }
    let mut out = Vec::with_capacity(bases.len() * (bases.len() - 1) / 2);
    for j in 0..bases.len() {
        for l in j + 1..bases.len() {
            out.push(principal_cosines(&bases[j], &bases[l])?);
        }
    }
    Ok(out)
}

/// Coarse admissibility search: tries every (c1, c2, c3) from `c_grid` and
/// g1 from `g1_grid` on the template and keeps the admissible combination
/// with the largest raw purity bound.
pub fn search_constants(
    template: &TheoryParams,
    c_grid: &[f64],
    g1_grid: &[f64],
) -> Option<(TheoryParams, BoundReport)> {
    let mut best: Option<(TheoryParams, BoundReport)> = None;
    for &c1 in c_grid {
        for &c2 in c_grid {
            for &c3 in c_grid {
                for &g1 in g1_grid {
                    let mut tp = template.clone();
                    tp.c1 = c1;
                    tp.c2 = c2;
                    tp.c3 = c3;
                    tp.g1 = g1;
                    if let Ok(report) = theorem_bounds(&tp) {
                        let better = best
                            .as_ref()
                            .is_none_or(|(_, b)| report.p1.raw > b.p1.raw);
                        if better {
                            best = Some((tp, report));
                        }
                    }
                }
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_detailed, SyntheticSpec};
    use crate::subcluster::{build_subcluster, subcluster_preserving_rate};
    use statrs::distribution::{ContinuousCDF, FisherSnedecor};

    fn admissible_template() -> TheoryParams {
        // Two orthogonal 3-dim subspaces: every pair cosine is 0.
        TheoryParams {
            d: 3,
            dim: 10,
            k: 2,
            counts: vec![500, 500],
            sampled: vec![20, 20],
            d_max: 4,
            n: 40,
            m: 5,
            pair_cosines: vec![vec![0.0; 3]],
            g1: 0.8,
            g2: 0.0,
            c1: 1.5,
            c2: 3.0,
            c3: 2.0,
            q0: 2.0,
            eta1: 0.5,
            eta2: 0.5,
            eta3: 0.5,
            sigma: 0.0,
        }
    }

    #[test]
    fn epsilon_matches_direct_arithmetic() {
        let eps = epsilon_from_constants(2.0, 2.0, 2.0, 4).unwrap();
        let expected = 0.5 * 2.0 / (4.0 + 20f64.sqrt());
        assert!((eps - expected).abs() < 1e-15);
        assert!((eps - 0.118_033_988_749_894_85).abs() < 1e-12);
    }

    #[test]
    fn epsilon_limit_drops_the_c3_factor() {
        let with_huge_c3 = epsilon_from_constants(1.7, 2.3, 1e12, 9).unwrap();
        let limit = 3.0 / (2.0 * 1.7 + (4.0f64 * 1.7 * 1.7 + 2.0 * 2.3).sqrt());
        assert!((with_huge_c3 - limit).abs() / limit < 1e-6);
    }

    #[test]
    fn epsilon_scales_as_sqrt_d() {
        let e1 = epsilon_from_constants(1.5, 3.0, 4.0, 5).unwrap();
        let e2 = epsilon_from_constants(1.5, 3.0, 4.0, 10).unwrap();
        assert!((e2 / e1 - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn epsilon_rejects_constants_at_or_below_one() {
        assert!(epsilon_from_constants(1.0, 2.0, 2.0, 4).is_err());
        assert!(epsilon_from_constants(2.0, 0.5, 2.0, 4).is_err());
        assert!(epsilon_from_constants(2.0, 2.0, 1.0, 4).is_err());
    }

    #[test]
    fn lemma1_sure_event_has_zero_tail() {
        // All weights equal and below g1: the weighted square sum is
        // exactly lambda^2 < g1^2 on every draw.
        let check = lemma1_check(&[0.3, 0.3, 0.3, 0.3, 0.3], 0.5, 10_000, 9).unwrap();
        assert_eq!(check.empirical, 0.0);
        assert!(check.holds);
    }

    #[test]
    fn lemma1_arcsine_case_is_half() {
        // d=2, lambda=(1,0), g1^2 = 1/2: the event is b_1^2 >= 1/2, which
        // has probability exactly 1/2 by symmetry of the circle.
        let check = lemma1_check(&[1.0, 0.0], 0.5f64.sqrt(), 100_000, 17).unwrap();
        assert!(check.epsilon.unwrap().abs() < 1e-7);
        assert!(check.bound > 2.0 - 1e-7);
        assert!((check.empirical - 0.5).abs() < 4.0 * check.stderr.max(1e-3));
        assert!(check.holds);
    }

    #[test]
    fn lemma1_bound_holds_on_random_admissible_configurations() {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(71);
        let mut tested = 0;
        while tested < 20 {
            let d = rng.random_range(2..8usize);
            let mut lambdas: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
            lambdas.sort_by(|a, b| b.total_cmp(a));
            let g1: f64 = rng.random::<f64>().max(0.05);
            let g1_sq = g1 * g1;
            let sum_r: f64 = lambdas.iter().map(|l| (g1_sq - l * l).max(0.0)).sum();
            let sum_s: f64 = lambdas.iter().map(|l| (l * l - g1_sq).max(0.0)).sum();
            if sum_r < sum_s {
                continue;
            }
            let check = lemma1_check(&lambdas, g1, 100_000, 1000 + tested as u64).unwrap();
            assert!(
                check.holds,
                "bound violated for lambdas {lambdas:?}, g1 {g1}: {check:?}"
            );
            tested += 1;
        }
    }

    #[test]
    fn lemma1_rejects_dominant_negative_parts() {
        assert!(matches!(
            lemma1_check(&[0.9, 0.8], 0.1, 100, 1),
            Err(Error::AssumptionViolated(_))
        ));
    }

    #[test]
    fn lemma1_rejects_unsorted_or_out_of_range_weights() {
        assert!(lemma1_check(&[0.3, 0.6], 0.5, 100, 1).is_err());
        assert!(lemma1_check(&[1.2, 0.5], 0.8, 100, 1).is_err());
    }

    #[test]
    fn corollary1_at_q_one_is_vacuous() {
        let check = corollary1_check(5, 7, 1.0, 100, 3).unwrap();
        assert_eq!(check.epsilon, Some(0.0));
        assert_eq!(check.bound, 2.0);
        assert!(check.holds);
    }

    #[test]
    fn corollary1_tail_matches_the_f_distribution() {
        let check = corollary1_check(10, 10, 3.0, 200_000, 23).unwrap();
        let f = FisherSnedecor::new(10.0, 10.0).unwrap();
        let exact = 1.0 - f.cdf(3.0);
        assert!(
            (check.empirical - exact).abs() < 4.0 * check.stderr.max(1e-3),
            "empirical {} vs exact {exact}",
            check.empirical
        );
        assert!(check.holds);
    }

    #[test]
    fn corollary1_bound_decreases_in_q() {
        let bounds: Vec<f64> = [1.5, 2.0, 4.0, 8.0]
            .iter()
            .map(|&q| corollary1_check(6, 9, q, 1, 1).unwrap().bound)
            .collect();
        assert!(bounds.windows(2).all(|w| w[0] > w[1]), "{bounds:?}");
    }

    #[test]
    fn corollary1_rejects_bad_degrees_or_q() {
        assert!(corollary1_check(1, 5, 2.0, 10, 1).is_err());
        assert!(corollary1_check(5, 1, 2.0, 10, 1).is_err());
        assert!(corollary1_check(5, 5, 0.5, 10, 1).is_err());
    }

    #[test]
    fn separation_inequality_examples() {
        // T = 0 reduces to 2 >= sqrt(2 pi d) d_max / n_j^(9/10).
        assert!(beta_quantile_holds(0.0, 5, 19, 10_000));
        let rhs = (2.0 * std::f64::consts::PI * 5.0).sqrt() * 19.0 / 10_000f64.powf(0.9);
        assert!(rhs < 2.0);
        // T near 1 sends the left side to zero.
        assert!(!beta_quantile_holds(0.999_999, 5, 19, 10_000));
    }

    #[test]
    fn order_statistic_bound_holds_at_the_published_scale() {
        // T^2 chosen to sit at the separation inequality's edge for this
        // configuration.
        let rhs = (2.0 * std::f64::consts::PI * 5.0).sqrt() * 19.0 / 2000f64.powf(0.9);
        let t_sq = 1.0 - (rhs / 2.0).sqrt();
        let check = lemma3_mc(5, 19, 2000, t_sq, 10_000, 37).unwrap();
        assert!(check.holds, "{check:?}");
    }

    #[test]
    fn order_statistic_bound_holds_with_a_busy_tail() {
        // Small-sample configuration where the event actually fires often.
        let check = lemma3_mc(3, 10, 40, 0.5, 10_000, 41).unwrap();
        assert!(check.empirical > 0.05, "want a nontrivial tail, got {check:?}");
        assert!(check.holds, "{check:?}");
    }

    #[test]
    fn lemma3_rejects_bad_shapes() {
        assert!(lemma3_mc(1, 5, 40, 0.5, 10, 1).is_err());
        assert!(lemma3_mc(3, 40, 40, 0.5, 10, 1).is_err());
        assert!(lemma3_mc(3, 5, 40, 1.5, 10, 1).is_err());
        assert!(lemma3_mc(3, 5, 40, 0.5, 0, 1).is_err());
    }

    #[test]
    fn bounds_approach_one_when_the_deviation_scale_blows_up() {
        let mut tp = admissible_template();
        tp.d = 10_000;
        tp.pair_cosines = vec![vec![0.0; 10_000]];
        tp.c1 = 1.0001;
        tp.c2 = 1.0001;
        tp.c3 = 1e12;
        tp.eta1 = 50.0;
        tp.eta2 = 50.0;
        tp.eta3 = 50.0;
        let epsilon = epsilon_from_constants(tp.c1, tp.c2, tp.c3, tp.d).unwrap();
        assert!(epsilon > 20.0);
        let (p1, p2, p3) = bound_formulas(&tp, epsilon);
        let exponent = 2.0 / 3.0;
        let order_stat: f64 = tp
            .sampled
            .iter()
            .zip(tp.counts.iter())
            .map(|(&nj, &cap)| {
                let c = cap as f64;
                nj as f64 * (c - tp.d_max as f64)
                    / (tp.d_max as f64 * (c + 1.0) * (c.powf(exponent) - 1.0).powi(2))
            })
            .sum();
        assert!((p1 - (1.0 - order_stat)).abs() < 1e-12);
        assert!(p2 > 1.0 - 1e-12);
        assert!(p3 > 1.0 - 1e-9);
    }

    #[test]
    fn neighborhood_bound_decreases_in_the_subsample_size() {
        let tp = admissible_template();
        let epsilon = epsilon_from_constants(tp.c1, tp.c2, tp.c3, tp.d).unwrap();
        let mut last = f64::INFINITY;
        for n in [40usize, 80, 160, 320] {
            let mut t = tp.clone();
            t.n = n;
            t.sampled = vec![n / 2, n / 2];
            let (_, p2, _) = bound_formulas(&t, epsilon);
            assert!(p2 < last, "p2 not decreasing at n = {n}");
            last = p2;
        }
    }

    #[test]
    fn orthogonal_template_is_admissible_and_reports_bounds() {
        let tp = admissible_template();
        let failures = check_assumptions(&tp).unwrap();
        assert!(failures.is_empty(), "{failures:?}");
        let report = theorem_bounds(&tp).unwrap();
        assert!(report.epsilon > 0.0);
        assert!(report.p1.raw <= 1.0 && report.p1.clamped >= 0.0);
        assert!(report.p2.raw <= 1.0);
        assert!(report.t_constant == tp.g1);
    }

    #[test]
    fn nearly_parallel_subspaces_are_rejected_with_reasons() {
        let mut tp = admissible_template();
        tp.pair_cosines = vec![vec![0.999, 0.999, 0.999]];
        let failures = check_assumptions(&tp).unwrap();
        assert!(!failures.is_empty());
        assert!(matches!(theorem_bounds(&tp), Err(Error::AssumptionViolated(_))));
        assert!(search_constants(
            &tp,
            &[1.3, 2.0, 4.0],
            &[0.3, 0.5, 0.7, 0.9]
        )
        .is_none());
    }

    #[test]
    fn coverage_precondition_is_reported() {
        let mut tp = admissible_template();
        tp.n = 500;
        tp.sampled = vec![250, 250];
        let failures = check_assumptions(&tp).unwrap();
        assert!(failures.iter().any(|f| f.contains("coverage")), "{failures:?}");
    }

    #[test]
    fn validation_rejects_malformed_parameters() {
        let mut tp = admissible_template();
        tp.pair_cosines = vec![vec![0.1, 0.5, 0.2]];
        assert!(tp.validate().is_err());

        tp = admissible_template();
        tp.pair_cosines = vec![vec![0.0; 3], vec![0.0; 3]];
        assert!(tp.validate().is_err());

        tp = admissible_template();
        tp.g2 = 1.0;
        assert!(tp.validate().is_err());

        tp = admissible_template();
        tp.sampled = vec![30, 20];
        assert!(tp.validate().is_err());

        tp = admissible_template();
        tp.d_max = 500;
        assert!(tp.validate().is_err());
    }

    #[test]
    fn cosines_of_known_plane_pairs() {
        let e = DMatrix::<f64>::identity(4, 4);
        let u = e.columns(0, 2).into_owned();
        let same = principal_cosines(&u, &u).unwrap();
        assert!(same.iter().all(|&c| (c - 1.0).abs() < 1e-12));

        let v = e.columns(2, 2).into_owned();
        let orth = principal_cosines(&u, &v).unwrap();
        assert!(orth.iter().all(|&c| c.abs() < 1e-12));

        // Planes tilted by known angles in disjoint coordinate pairs.
        let (a1, a2) = (0.3f64, 1.1f64);
        let mut w = DMatrix::<f64>::zeros(4, 2);
        w[(0, 0)] = a1.cos();
        w[(2, 0)] = a1.sin();
        w[(1, 1)] = a2.cos();
        w[(3, 1)] = a2.sin();
        let tilted = principal_cosines(&u, &w).unwrap();
        assert!((tilted[0] - a1.cos()).abs() < 1e-12);
        assert!((tilted[1] - a2.cos()).abs() < 1e-12);

        let narrow = DMatrix::<f64>::identity(3, 2);
        assert!(matches!(
            principal_cosines(&u, &narrow),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn pair_layout_matches_the_accessor() {
        let tp = TheoryParams {
            k: 4,
            pair_cosines: (0..6).map(|p| vec![p as f64 / 10.0; 3]).collect(),
            ..admissible_template()
        };
        // Pairs in order: (0,1) (0,2) (0,3) (1,2) (1,3) (2,3).
        assert_eq!(tp.cosines(0, 1)[0], 0.0);
        assert_eq!(tp.cosines(0, 3)[0], 0.2);
        assert_eq!(tp.cosines(1, 2)[0], 0.3);
        assert_eq!(tp.cosines(2, 3)[0], 0.5);
        assert_eq!(tp.cosines(3, 2)[0], 0.5);
    }

    #[test]
    fn published_scale_bounds_and_empirical_purity() {
        let spec = SyntheticSpec {
            k: 15,
            d: 5,
            dim: 30,
            counts: vec![10_000; 15],
            sigma: 0.0,
            seed: 90,
        };
        let inst = generate_synthetic_detailed(&spec).unwrap();
        let pair_cosines = pair_cosines_from_bases(&inst.bases).unwrap();

        let n = 900;
        let total = 150_000;
        let mut rng = ChaCha20Rng::seed_from_u64(91);
        let anchors = rand::seq::index::sample(&mut rng, total, n).into_vec();
        let truth = inst.dataset.labels.as_ref().unwrap();
        let mut sampled = vec![0usize; 15];
        for &a in &anchors {
            sampled[truth[a]] += 1;
        }

        let template = TheoryParams {
            d: 5,
            dim: 30,
            k: 15,
            counts: vec![10_000; 15],
            sampled,
            d_max: 19,
            n,
            m: 10,
            pair_cosines,
            g1: 0.9,
            g2: 0.0,
            c1: 2.0,
            c2: 2.0,
            c3: 2.0,
            q0: 2.0,
            eta1: 0.5,
            eta2: 0.5,
            eta3: 0.5,
            sigma: 0.0,
        };
        let (tp, report) = search_constants(
            &template,
            &[1.2, 1.3, 1.6, 2.0, 3.0, 6.0, 10.0, 20.0],
            &[0.5, 0.6, 0.7, 0.8, 0.88, 0.93],
        )
        .expect("no admissible constants found at this scale");
        assert!(report.p1.raw.is_finite());
        assert!((0.0..=1.0).contains(&report.p1.clamped));
        assert!(check_assumptions(&tp).unwrap().is_empty());

        let subclusters: Vec<_> = anchors
            .iter()
            .map(|&a| build_subcluster(&inst.dataset, a, 19).unwrap())
            .collect();
        let rate = subcluster_preserving_rate(&subclusters, truth).unwrap();
        assert!(
            rate >= report.p1.clamped,
            "empirical purity {rate} below the clamped bound {}",
            report.p1.clamped
        );
        assert!(rate >= 0.95, "noiseless purity unexpectedly low: {rate}");
    }
}
