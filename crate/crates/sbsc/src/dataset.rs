//! Data model, column normalization, synthetic generation, CSV ingestion.
//!
//! Points are stored column-major: a dataset is a `D x N` matrix whose
//! columns are unit vectors, plus optional ground-truth labels. The
//! synthetic generator draws K random d-dimensional subspaces of R^D and
//! emits noisy unit-norm points from them.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// A collection of N points in R^D, one per column, each unit-norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `D x N` matrix; each column is one point.
    pub points: DMatrix<f64>,
    /// Optional ground-truth labels, one per column, values in `0..K`.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    /// Wraps a point matrix and optional labels, checking the label length.
    pub fn new(points: DMatrix<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        if let Some(ref l) = labels {
            if l.len() != points.ncols() {
                return Err(Error::LengthMismatch {
                    left: l.len(),
                    right: points.ncols(),
                });
            }
        }
        Ok(Self { points, labels })
    }

    /// Ambient dimension D.
    pub fn dim(&self) -> usize {
        self.points.nrows()
    }

    /// Number of points N.
    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    /// True when the dataset holds no points.
    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }
}

/// Parameters of the synthetic union-of-subspaces generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    /// Number of subspaces K.
    pub k: usize,
    /// Dimension d shared by all subspaces.
    pub d: usize,
    /// Ambient dimension D.
    pub dim: usize,
    /// Points per subspace, `N_1..N_K`.
    pub counts: Vec<usize>,
    /// Noise scale sigma >= 0.
    pub sigma: f64,
    /// Generator seed.
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidSpec("K must be at least 1".into()));
        }
        if self.d == 0 || self.d > self.dim {
            return Err(Error::InvalidSpec(format!(
                "need 1 <= d <= D, got d={} D={}",
                self.d, self.dim
            )));
        }
        if self.counts.len() != self.k {
            return Err(Error::InvalidSpec(format!(
                "counts has {} entries for K={}",
                self.counts.len(),
                self.k
            )));
        }
        if self.counts.iter().any(|&c| c == 0) {
            return Err(Error::InvalidSpec("every cluster count must be >= 1".into()));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidSpec(format!("sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    /// Total point count N.
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// A generated dataset together with the subspace bases that produced it.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    /// The generated points and labels.
    pub dataset: Dataset,
    /// Orthonormal basis `U_k` (`D x d`) of each subspace.
    pub bases: Vec<DMatrix<f64>>,
}

/// Rescales every column to unit Euclidean norm.
///
/// Fails with [`Error::ZeroColumn`] on the first column whose norm is at or
/// below 1e-12.
pub fn normalize_columns(mut m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for j in 0..m.ncols() {
        let norm = m.column(j).norm();
        if !(norm > 1e-12) {
            return Err(Error::ZeroColumn(j));
        }
        m.column_mut(j).scale_mut(1.0 / norm);
    }
    Ok(m)
}

/// Draws one point from the subspace spanned by `u`.
///
/// Returns the normalized point, the squared radial factor `zeta^2`, and the
/// squared raw noise norm (0 when sigma = 0). The construction: direction
/// uniform on the unit sphere of the subspace, radius with `zeta^2` chi-squared
/// (d degrees of freedom), ambient Gaussian noise with covariance
/// `d sigma^2 I_D`, then projection to the unit sphere of R^D.
fn sample_point(
    rng: &mut ChaCha20Rng,
    u: &DMatrix<f64>,
    d: usize,
    sigma: f64,
) -> (DVector<f64>, f64, f64) {
    let mut a = DVector::<f64>::zeros(d);
    loop {
        for v in a.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = a.norm();
        if norm > 1e-12 {
            a.scale_mut(1.0 / norm);
            break;
        }
    }
    let chi = ChiSquared::new(d as f64).expect("d >= 1");
    let zeta_sq: f64 = chi.sample(rng);
    let mut y = u * a;
    y.scale_mut(zeta_sq.sqrt());
    let mut noise_sq = 0.0;
    if sigma > 0.0 {
        let scale = sigma * (d as f64).sqrt();
        for v in y.iter_mut() {
            let e: f64 = rng.sample(StandardNormal);
            let e = e * scale;
            noise_sq += e * e;
            *v += e;
        }
    }
    let norm = y.norm();
    y.scale_mut(1.0 / norm);
    (y, zeta_sq, noise_sq)
}

fn random_basis(rng: &mut ChaCha20Rng, dim: usize, d: usize) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(dim, d, |_, _| rng.sample(StandardNormal));
    g.qr().q()
}

/// Generates a labeled synthetic dataset and keeps the subspace bases.
///
/// Deterministic given the spec (including its seed): generation is
/// single-threaded with a fixed draw order.
pub fn generate_synthetic_detailed(spec: &SyntheticSpec) -> Result<SyntheticInstance> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let n_total = spec.total();
    let mut points = DMatrix::<f64>::zeros(spec.dim, n_total);
    let mut labels = Vec::with_capacity(n_total);
    let mut bases = Vec::with_capacity(spec.k);
    let mut col = 0;
    for (k, &count) in spec.counts.iter().enumerate() {
        let u = random_basis(&mut rng, spec.dim, spec.d);
        for _ in 0..count {
            let (y, _, _) = sample_point(&mut rng, &u, spec.d, spec.sigma);
            points.set_column(col, &y);
            labels.push(k);
            col += 1;
        }
        bases.push(u);
    }
    Ok(SyntheticInstance {
        dataset: Dataset {
            points,
            labels: Some(labels),
        },
        bases,
    })
}

/// Generates a labeled synthetic dataset (see [`generate_synthetic_detailed`]).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    Ok(generate_synthetic_detailed(spec)?.dataset)
}

/// On-disk orientation of a CSV dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvLayout {
    /// One point per row; optional header whose last field `label` marks a
    /// trailing ground-truth column.
    Rows,
    /// One point per column (the file holds the matrix as written); numeric
    /// only, no labels.
    Cols,
}

fn parse_fields(line: &str, lineno: usize) -> Result<Vec<f64>> {
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| Error::ParseError(lineno))
        })
        .collect()
}

/// Loads a CSV dataset and normalizes its columns.
///
/// `Rows` layout: each line is one point; if the first line is a header and
/// its last field is `label`, that column is read as ground truth (1-based
/// label sets are shifted to 0-based). `Cols` layout: the file is the `D x N`
/// matrix verbatim.
pub fn load_dataset(path: &Path, layout: CsvLayout) -> Result<Dataset> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let mut lines = Vec::new();
    for l in reader.lines() {
        let l = l?;
        if !l.trim().is_empty() {
            lines.push(l);
        }
    }
    if lines.is_empty() {
        return Err(Error::ParseError(0));
    }

    let mut has_label = false;
    let mut start = 0;
    if layout == CsvLayout::Rows {
        let first_numeric = lines[0]
            .split(',')
            .all(|f| f.trim().parse::<f64>().is_ok());
        if !first_numeric {
            has_label = lines[0]
                .split(',')
                .next_back()
                .map(|f| f.trim().eq_ignore_ascii_case("label"))
                .unwrap_or(false);
            start = 1;
            if lines.len() == start {
                return Err(Error::ParseError(0));
            }
        }
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(lines.len() - start);
    for (i, line) in lines.iter().enumerate().skip(start) {
        let fields = parse_fields(line, i + 1)?;
        if let Some(prev) = rows.first() {
            if fields.len() != prev.len() {
                return Err(Error::ParseError(i + 1));
            }
        }
        rows.push(fields);
    }

    let (points, labels) = match layout {
        CsvLayout::Rows => {
            let n = rows.len();
            let width = rows[0].len();
            let feat = if has_label { width - 1 } else { width };
            if feat == 0 {
                return Err(Error::ParseError(start + 1));
            }
            let mut m = DMatrix::<f64>::zeros(feat, n);
            let mut labels = if has_label { Some(Vec::with_capacity(n)) } else { None };
            for (j, row) in rows.iter().enumerate() {
                for (i, &v) in row[..feat].iter().enumerate() {
                    m[(i, j)] = v;
                }
                if let Some(ref mut l) = labels {
                    let raw = row[feat];
                    if raw < 0.0 || raw.fract() != 0.0 {
                        return Err(Error::ParseError(start + j + 1));
                    }
                    l.push(raw as usize);
                }
            }
            (m, labels)
        }
        CsvLayout::Cols => {
            let dim = rows.len();
            let n = rows[0].len();
            let mut m = DMatrix::<f64>::zeros(dim, n);
            for (i, row) in rows.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    m[(i, j)] = v;
                }
            }
            (m, None)
        }
    };

    let labels = labels.map(|l| {
        if l.iter().min().copied() == Some(1) {
            l.into_iter().map(|v| v - 1).collect()
        } else {
            l
        }
    });
    Dataset::new(normalize_columns(points)?, labels)
}

/// Writes a dataset as row-oriented CSV with header `f0..f{D-1}[,label]`.
pub fn save_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    let dim = data.dim();
    let mut header: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
    if data.labels.is_some() {
        header.push("label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    for j in 0..data.len() {
        let mut fields: Vec<String> = (0..dim).map(|i| data.points[(i, j)].to_string()).collect();
        if let Some(ref l) = data.labels {
            fields.push(l[j].to_string());
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    w.flush()?;
    Ok(())
}
