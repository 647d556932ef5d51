//! Command-line front end: flat key=value configs, dataset generation,
//! pipeline runs, benchmark sweeps, and bound reports.
//!
//! Every command reads one config file plus `--set KEY=VALUE` overrides
//! (highest precedence), draws all randomness from the single `seed` key
//! (absent means 0), and exits 0 exactly when its report file was fully
//! written. A `threads` key (or the `SBSC_THREADS` variable) caps worker
//! parallelism; outputs do not depend on it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use crate::dataset::{
    generate_synthetic, generate_synthetic_detailed, load_dataset, save_dataset, CsvLayout,
    Dataset, SyntheticSpec,
};
use crate::ensemble::{bag_detailed, SBSCParams};
use crate::error::{Error, Result};
use crate::metrics::{accuracy, nmi};
use crate::spectral::LabelVector;
use crate::substream;
use crate::theory::{
    check_assumptions, corollary1_check, lemma1_check, lemma3_mc, pair_cosines_from_bases,
    search_constants, theorem_bounds, BoundReport, TheoryParams,
};

/// Subspace clustering by spectral analysis of sampled sub-clusters.
#[derive(Debug, Parser)]
#[command(name = "sbsc", version, about)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic union-of-subspaces dataset as CSV.
    Gen(GenArgs),
    /// Cluster a dataset; write a labels CSV and a JSON report.
    Run(RunArgs),
    /// Sweep noise level or dataset size; write a plot-ready CSV.
    Bench(BenchArgs),
    /// Evaluate probability bounds with Monte-Carlo validation.
    Theory(TheoryArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Flat key=value config file; later --set overrides win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set seed=7. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct GenArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Output dataset CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Input dataset CSV path.
    #[arg(long)]
    data: PathBuf,
    /// Output labels CSV path (`index,label`).
    #[arg(long)]
    labels_out: PathBuf,
    /// Output report JSON path.
    #[arg(long)]
    report_out: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Output sweep CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TheoryArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Output report JSON path.
    #[arg(long)]
    out: PathBuf,
}

/// Parsed flat key=value configuration.
#[derive(Debug, Clone, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    /// Parses a config file: one `key=value` per line, `#` comments and
    /// blank lines ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Config::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            cfg.apply(line)
                .map_err(|e| Error::Config(format!("{} line {}: {e}", path.display(), i + 1)))?;
        }
        Ok(cfg)
    }

    /// Applies one `key=value` assignment, overriding any earlier value.
    pub fn apply(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("expected key=value, got '{assignment}'")))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::Config(format!("empty key in '{assignment}'")));
        }
        self.entries.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    /// Raw value for `key`, if present.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, kind: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|_| {
                Error::Config(format!("key '{key}': expected {kind}, got '{v}'"))
            }),
        }
    }

    /// Optional unsigned integer value.
    pub fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        self.parse(key, "an unsigned integer")
    }

    /// Optional seed value.
    pub fn u64_opt(&self, key: &str) -> Result<Option<u64>> {
        self.parse(key, "an unsigned integer")
    }

    /// Optional float value.
    pub fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        self.parse(key, "a number")
    }

    /// Optional boolean value (`true`/`false`/`1`/`0`).
    pub fn bool_opt(&self, key: &str) -> Result<Option<bool>> {
        match self.get(key) {
            None => Ok(None),
            Some("true") | Some("1") => Ok(Some(true)),
            Some("false") | Some("0") => Ok(Some(false)),
            Some(v) => Err(Error::Config(format!(
                "key '{key}': expected true/false, got '{v}'"
            ))),
        }
    }

    /// Optional comma-separated list of unsigned integers.
    pub fn usize_list_opt(&self, key: &str) -> Result<Option<Vec<usize>>> {
        self.list(key, "an unsigned integer")
    }

    /// Optional comma-separated list of floats.
    pub fn f64_list_opt(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.list(key, "a number")
    }

    fn list<T: std::str::FromStr>(&self, key: &str, kind: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|f| {
                    f.trim().parse::<T>().map_err(|_| {
                        Error::Config(format!("key '{key}': expected {kind}, got '{f}'"))
                    })
                })
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Required unsigned integer value.
    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.usize_opt(key)?
            .ok_or_else(|| Error::Config(format!("missing required key '{key}'")))
    }
}

fn load_config(args: &ConfigArgs) -> Result<Config> {
    let mut cfg = match &args.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    for assignment in &args.set {
        cfg.apply(assignment)?;
    }
    Ok(cfg)
}

fn thread_cap(cfg: &Config) -> Result<Option<usize>> {
    if let Some(t) = cfg.usize_opt("threads")? {
        return Ok(Some(t));
    }
    match std::env::var("SBSC_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|_| Error::Config(format!("SBSC_THREADS: expected a thread count, got '{v}'"))),
        Err(_) => Ok(None),
    }
}

fn with_pool<T: Send>(cap: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match cap {
        None => f(),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Runs the parsed command line; errors should be printed and mapped to a
/// nonzero exit by the caller.
pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => {
            let cfg = load_config(&a.common)?;
            with_pool(thread_cap(&cfg)?, || cmd_gen(&cfg, &a.out))
        }
        Command::Run(a) => {
            let cfg = load_config(&a.common)?;
            with_pool(thread_cap(&cfg)?, || {
                cmd_run(&cfg, &a.data, &a.labels_out, &a.report_out)
            })
        }
        Command::Bench(a) => {
            let cfg = load_config(&a.common)?;
            with_pool(thread_cap(&cfg)?, || cmd_bench(&cfg, &a.out))
        }
        Command::Theory(a) => {
            let cfg = load_config(&a.common)?;
            with_pool(thread_cap(&cfg)?, || cmd_theory(&cfg, &a.out))
        }
    }
}

fn synthetic_spec(cfg: &Config) -> Result<SyntheticSpec> {
    let k = cfg.require_usize("k")?;
    let d = cfg.require_usize("d")?;
    let dim = cfg.require_usize("dim")?;
    let counts = match (cfg.usize_list_opt("counts")?, cfg.usize_opt("n_per_cluster")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either 'counts' or 'n_per_cluster', not both".into(),
            ))
        }
        (Some(c), None) => c,
        (None, Some(per)) => vec![per; k],
        (None, None) => {
            return Err(Error::Config(
                "missing cluster sizes: set 'counts' or 'n_per_cluster'".into(),
            ))
        }
    };
    Ok(SyntheticSpec {
        k,
        d,
        dim,
        counts,
        sigma: cfg.f64_opt("sigma")?.unwrap_or(0.0),
        seed: cfg.u64_opt("seed")?.unwrap_or(0),
    })
}

fn cmd_gen(cfg: &Config, out: &Path) -> Result<()> {
    let spec = synthetic_spec(cfg)?;
    let data = generate_synthetic(&spec)?;
    save_dataset(out, &data)?;
    println!(
        "wrote {}: N={} K={} d={} D={} sigma={} seed={}",
        out.display(),
        data.len(),
        spec.k,
        spec.d,
        spec.dim,
        spec.sigma,
        spec.seed
    );
    Ok(())
}

fn run_params(cfg: &Config, data: &Dataset) -> Result<SBSCParams> {
    let k = cfg.require_usize("k")?;
    let mut params = SBSCParams::heuristic(k, data.len(), data.dim());
    if let Some(n) = cfg.usize_opt("n")? {
        params.n = n;
    }
    if let Some(d_max) = cfg.usize_opt("d_max")? {
        params.d_max = d_max;
    }
    if let Some(m) = cfg.usize_opt("m")? {
        params.m = m;
    }
    if let Some(b) = cfg.usize_opt("bags")? {
        params.bags = b;
    }
    params.lambda1 = cfg.f64_opt("lambda1")?;
    params.lambda2 = cfg.f64_opt("lambda2")?;
    params.threshold_grid = cfg.usize_list_opt("threshold_grid")?;
    params.seed = cfg.u64_opt("seed")?.unwrap_or(0);
    params.noisy = cfg.bool_opt("noisy")?.unwrap_or(false);
    params.subspace_dim = cfg.usize_opt("subspace_dim")?;
    params.validate(data)?;
    Ok(params)
}

fn csv_layout(cfg: &Config) -> Result<CsvLayout> {
    match cfg.get("layout") {
        None | Some("rows") => Ok(CsvLayout::Rows),
        Some("cols") => Ok(CsvLayout::Cols),
        Some(v) => Err(Error::Config(format!(
            "key 'layout': expected rows or cols, got '{v}'"
        ))),
    }
}

fn write_labels_csv(path: &Path, labels: &LabelVector) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "index,label")?;
    for (i, l) in labels.labels.iter().enumerate() {
        writeln!(w, "{i},{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn cluster_sizes(labels: &LabelVector) -> Vec<usize> {
    let mut sizes = vec![0usize; labels.k];
    for &l in &labels.labels {
        sizes[l] += 1;
    }
    sizes
}

fn write_json(path: &Path, doc: &serde_json::Value) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, doc)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn cmd_run(cfg: &Config, data_path: &Path, labels_out: &Path, report_out: &Path) -> Result<()> {
    let data = load_dataset(data_path, csv_layout(cfg)?)
        .map_err(|e| Error::Config(format!("dataset {}: {e}", data_path.display())))?;
    let params = run_params(cfg, &data)?;

    let start = Instant::now();
    let outcome = bag_detailed(&data, &params)?;
    let wall = start.elapsed().as_secs_f64();

    write_labels_csv(labels_out, &outcome.labels)?;

    let bags: Vec<serde_json::Value> = outcome
        .runs
        .iter()
        .enumerate()
        .map(|(b, run)| {
            json!({
                "seed": params.seed.wrapping_add(b as u64),
                "t_max": run.t_max,
                "lambda1": run.lambda1,
                "lambda2": run.lambda2,
                "cluster_sizes": cluster_sizes(&run.labels),
                "stage_seconds": {
                    "subsample": run.times.subsample,
                    "subclusters": run.times.subclusters,
                    "affinity": run.times.affinity,
                    "spectral": run.times.selection,
                    "oos": run.times.oos,
                },
                "total_seconds": run.times.total(),
            })
        })
        .collect();
    let stage_total: f64 =
        outcome.runs.iter().map(|r| r.times.total()).sum::<f64>() + outcome.vote_seconds;

    let mut report = json!({
        "schema": 1,
        "command": "run",
        "seed": params.seed,
        "params": {
            "k": params.k,
            "n": params.n,
            "d_max": params.d_max,
            "m": params.m,
            "bags": params.bags,
            "lambda1": params.lambda1,
            "lambda2": params.lambda2,
            "threshold_grid": params.grid(),
            "noisy": params.noisy,
            "subspace_dim": params.subspace_dim,
        },
        "data": {
            "path": data_path.display().to_string(),
            "points": data.len(),
            "dim": data.dim(),
            "has_labels": data.labels.is_some(),
        },
        "bags": bags,
        "cluster_sizes": cluster_sizes(&outcome.labels),
        "vote_seconds": outcome.vote_seconds,
        "total_seconds": stage_total,
        "wall_seconds": wall,
    });
    let mut summary = format!(
        "clustered {} points into {} groups in {:.2}s",
        data.len(),
        outcome.labels.k,
        wall
    );
    if let Some(truth) = &data.labels {
        let acc = accuracy(&outcome.labels.labels, truth)?;
        let info = nmi(&outcome.labels.labels, truth)?;
        report["metrics"] = json!({ "accuracy": acc, "nmi": info });
        summary.push_str(&format!(" (accuracy {acc:.4}, nmi {info:.4})"));
    }
    write_json(report_out, &report)?;
    println!("{summary}");
    println!("labels: {}", labels_out.display());
    println!("report: {}", report_out.display());
    Ok(())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (lx, ly) = (x.ln(), y.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    Some((n * sxy - sx * sy) / denom)
}

struct SweepRow {
    level: f64,
    accuracy: (f64, f64),
    nmi: (f64, f64),
    runtime: f64,
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "level,accuracy_mean,accuracy_sd,nmi_mean,nmi_sd,runtime_seconds")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            r.level, r.accuracy.0, r.accuracy.1, r.nmi.0, r.nmi.1, r.runtime
        )?;
    }
    w.flush()?;
    Ok(())
}

/// One benchmark measurement: generate (untimed), cluster (timed), score.
fn bench_once(spec: &SyntheticSpec, params: &SBSCParams) -> Result<(f64, f64, f64)> {
    let data = generate_synthetic(spec)?;
    let start = Instant::now();
    let outcome = bag_detailed(&data, params)?;
    let secs = start.elapsed().as_secs_f64();
    let truth = data.labels.as_ref().expect("synthetic data is labeled");
    Ok((
        accuracy(&outcome.labels.labels, truth)?,
        nmi(&outcome.labels.labels, truth)?,
        secs,
    ))
}

fn cmd_bench(cfg: &Config, out: &Path) -> Result<()> {
    let axis = cfg.get("axis").unwrap_or("sigma");
    let rows = match axis {
        "sigma" => bench_sigma(cfg)?,
        "N" => bench_scaling(cfg)?,
        other => {
            return Err(Error::Config(format!(
                "key 'axis': expected sigma or N, got '{other}'"
            )))
        }
    };
    write_sweep_csv(out, &rows)?;
    println!("wrote {} ({} rows)", out.display(), rows.len());
    Ok(())
}

fn bench_sigma(cfg: &Config) -> Result<Vec<SweepRow>> {
    let levels = cfg
        .f64_list_opt("sigma_levels")?
        .unwrap_or_else(|| vec![0.0, 0.05, 0.10, 0.15, 0.20, 0.25]);
    let per_level = cfg.usize_opt("datasets_per_level")?.unwrap_or(10);
    if per_level == 0 {
        return Err(Error::Config("datasets_per_level must be positive".into()));
    }
    let seed = cfg.u64_opt("seed")?.unwrap_or(0);
    let k = cfg.usize_opt("k")?.unwrap_or(5);
    let d = cfg.usize_opt("d")?.unwrap_or(5);
    let dim = cfg.usize_opt("dim")?.unwrap_or(30);
    let per_cluster = cfg.usize_opt("n_per_cluster")?.unwrap_or(2000);

    let mut rows = Vec::new();
    for (li, &sigma) in levels.iter().enumerate() {
        let (mut accs, mut nmis, mut times) = (Vec::new(), Vec::new(), Vec::new());
        for rep in 0..per_level {
            let tag = (li * per_level + rep) as u64;
            let spec = SyntheticSpec {
                k,
                d,
                dim,
                counts: vec![per_cluster; k],
                sigma,
                seed: substream(seed, tag),
            };
            let mut params = bench_params(cfg, &spec)?;
            params.noisy = sigma > 0.0;
            params.seed = substream(seed, 1_000_000 + tag);
            let (a, i, t) = bench_once(&spec, &params)?;
            accs.push(a);
            nmis.push(i);
            times.push(t);
        }
        let (am, asd) = mean_sd(&accs);
        let (im, isd) = mean_sd(&nmis);
        let (tm, _) = mean_sd(&times);
        println!("sigma={sigma}: accuracy {am:.4} +- {asd:.4}, nmi {im:.4} +- {isd:.4}, {tm:.2}s");
        rows.push(SweepRow {
            level: sigma,
            accuracy: (am, asd),
            nmi: (im, isd),
            runtime: tm,
        });
    }
    Ok(rows)
}

fn bench_params(cfg: &Config, spec: &SyntheticSpec) -> Result<SBSCParams> {
    let total = spec.total();
    let mut params = SBSCParams::heuristic(spec.k, total, spec.dim);
    if let Some(n) = cfg.usize_opt("n")? {
        params.n = n;
    }
    if let Some(d_max) = cfg.usize_opt("d_max")? {
        params.d_max = d_max;
    }
    if let Some(m) = cfg.usize_opt("m")? {
        params.m = m;
    }
    if let Some(b) = cfg.usize_opt("bags")? {
        params.bags = b;
    }
    params.subspace_dim = Some(cfg.usize_opt("subspace_dim")?.unwrap_or(spec.d));
    Ok(params)
}

fn bench_scaling(cfg: &Config) -> Result<Vec<SweepRow>> {
    let n_values = cfg
        .usize_list_opt("n_values")?
        .unwrap_or_else(|| vec![20_000, 40_000, 80_000, 160_000]);
    if n_values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("n_values must be strictly increasing".into()));
    }
    let reps = cfg.usize_opt("reps")?.unwrap_or(3);
    if reps == 0 {
        return Err(Error::Config("reps must be positive".into()));
    }
    let seed = cfg.u64_opt("seed")?.unwrap_or(0);
    let sigma = cfg.f64_opt("sigma")?.unwrap_or(0.2);
    let k = cfg.usize_opt("k")?.unwrap_or(10);
    let d = cfg.usize_opt("d")?.unwrap_or(5);
    let dim = cfg.usize_opt("dim")?.unwrap_or(60);

    let mut rows = Vec::new();
    for (li, &total) in n_values.iter().enumerate() {
        let mut counts = vec![total / k; k];
        for c in counts.iter_mut().take(total % k) {
            *c += 1;
        }
        let (mut accs, mut nmis, mut times) = (Vec::new(), Vec::new(), Vec::new());
        for rep in 0..reps {
            let tag = (li * reps + rep) as u64;
            let spec = SyntheticSpec {
                k,
                d,
                dim,
                counts: counts.clone(),
                sigma,
                seed: substream(seed, tag),
            };
            let mut params = bench_params(cfg, &spec)?;
            if cfg.usize_opt("n")?.is_none() {
                params.n = 60;
            }
            if cfg.usize_opt("d_max")?.is_none() {
                params.d_max = 11;
            }
            if cfg.usize_opt("m")?.is_none() {
                params.m = 30;
            }
            params.noisy = sigma > 0.0;
            params.seed = substream(seed, 1_000_000 + tag);
            let (a, i, t) = bench_once(&spec, &params)?;
            accs.push(a);
            nmis.push(i);
            times.push(t);
        }
        let (am, asd) = mean_sd(&accs);
        let (im, isd) = mean_sd(&nmis);
        let runtime = median(times);
        println!("N={total}: accuracy {am:.4} +- {asd:.4}, median runtime {runtime:.2}s");
        rows.push(SweepRow {
            level: total as f64,
            accuracy: (am, asd),
            nmi: (im, isd),
            runtime,
        });
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.level, r.runtime)).collect();
    if let Some(slope) = loglog_slope(&points) {
        println!("log-log slope: {slope:.4}");
    }
    Ok(rows)
}

fn cmd_theory(cfg: &Config, out: &Path) -> Result<()> {
    let k = cfg.usize_opt("k")?.unwrap_or(15);
    let d = cfg.usize_opt("d")?.unwrap_or(5);
    let dim = cfg.usize_opt("dim")?.unwrap_or(30);
    let counts = match (cfg.usize_list_opt("counts")?, cfg.usize_opt("n_per_cluster")?) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either 'counts' or 'n_per_cluster', not both".into(),
            ))
        }
        (Some(c), None) => c,
        (None, Some(per)) => vec![per; k],
        (None, None) => vec![10_000; k],
    };
    let sigma = cfg.f64_opt("sigma")?.unwrap_or(0.0);
    let seed = cfg.u64_opt("seed")?.unwrap_or(0);
    let n = cfg.usize_opt("n")?.unwrap_or(900);
    let d_max = cfg.usize_opt("d_max")?.unwrap_or(19);
    let m = cfg.usize_opt("m")?.unwrap_or(10);
    let trials = cfg.usize_opt("trials")?.unwrap_or(100_000);
    let order_stat_trials = cfg.usize_opt("order_stat_trials")?.unwrap_or(2_000);

    let spec = SyntheticSpec {
        k,
        d,
        dim,
        counts: counts.clone(),
        sigma,
        seed,
    };
    let total = spec.total();
    if n > total {
        return Err(Error::Config(format!("n = {n} exceeds the {total} generated points")));
    }
    let inst = generate_synthetic_detailed(&spec)?;
    let pair_cosines = pair_cosines_from_bases(&inst.bases)?;
    let truth = inst.dataset.labels.as_ref().expect("synthetic data is labeled");
    let mut rng = ChaCha20Rng::seed_from_u64(substream(seed, 1));
    let anchors = rand::seq::index::sample(&mut rng, total, n).into_vec();
    let mut sampled = vec![0usize; k];
    for &a in &anchors {
        sampled[truth[a]] += 1;
    }

    let template = TheoryParams {
        d,
        dim,
        k,
        counts,
        sampled: sampled.clone(),
        d_max,
        n,
        m,
        pair_cosines,
        g1: cfg.f64_opt("g1")?.unwrap_or(0.9),
        g2: cfg
            .f64_opt("g2")?
            .unwrap_or(if sigma > 0.0 { 1.1 * sigma * (dim as f64).sqrt() } else { 0.0 }),
        c1: cfg.f64_opt("c1")?.unwrap_or(2.0),
        c2: cfg.f64_opt("c2")?.unwrap_or(2.0),
        c3: cfg.f64_opt("c3")?.unwrap_or(2.0),
        q0: cfg.f64_opt("q0")?.unwrap_or(2.0),
        eta1: cfg.f64_opt("eta1")?.unwrap_or(0.5),
        eta2: cfg.f64_opt("eta2")?.unwrap_or(0.5),
        eta3: cfg.f64_opt("eta3")?.unwrap_or(0.5),
        sigma,
    };
    template.validate()?;

    // Constants are searched unless the user pinned all four of them.
    let pinned = ["g1", "c1", "c2", "c3"].iter().all(|key| cfg.get(key).is_some());
    let do_search = cfg.bool_opt("search")?.unwrap_or(!pinned);
    let (found, failures): (Option<(TheoryParams, BoundReport)>, Vec<String>) = if do_search {
        let c_grid = cfg
            .f64_list_opt("c_grid")?
            .unwrap_or_else(|| vec![1.2, 1.3, 1.6, 2.0, 3.0, 6.0, 10.0, 20.0]);
        let g1_grid = cfg
            .f64_list_opt("g1_grid")?
            .unwrap_or_else(|| vec![0.5, 0.6, 0.7, 0.8, 0.88, 0.93]);
        match search_constants(&template, &c_grid, &g1_grid) {
            Some(best) => (Some(best), Vec::new()),
            None => (
                None,
                vec!["no admissible constants in the searched grids".to_string()],
            ),
        }
    } else {
        let failures = check_assumptions(&template)?;
        if failures.is_empty() {
            let report = theorem_bounds(&template)?;
            (Some((template.clone(), report)), Vec::new())
        } else {
            (None, failures)
        }
    };

    let mut doc = json!({
        "schema": 1,
        "command": "theory",
        "seed": seed,
        "model": { "k": k, "d": d, "dim": dim, "counts": template.counts, "sigma": sigma },
        "pipeline": { "n": n, "d_max": d_max, "m": m, "sampled": sampled },
        "searched": do_search,
        "admissible": found.is_some(),
    });
    match &found {
        None => {
            doc["failures"] = json!(failures);
            println!("no admissible configuration: {} finding(s)", failures.len());
        }
        Some((tp, report)) => {
            doc["constants"] = json!({
                "g1": tp.g1, "g2": tp.g2, "c1": tp.c1, "c2": tp.c2, "c3": tp.c3,
                "q0": tp.q0, "eta1": tp.eta1, "eta2": tp.eta2, "eta3": tp.eta3,
            });
            doc["bounds"] = serde_json::to_value(report)
                .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
            doc["mc"] = mc_section(cfg, tp, trials, order_stat_trials, seed)?;
            println!(
                "epsilon {:.4}; clamped bounds: purity {:.4}, ordering {:.4}, labeling {:.4}",
                report.epsilon, report.p1.clamped, report.p2.clamped, report.p3.clamped
            );
        }
    }
    write_json(out, &doc)?;
    println!("report: {}", out.display());
    Ok(())
}

/// Monte-Carlo validations of the concentration inequalities the bounds
/// rest on, at the found constants.
fn mc_section(
    cfg: &Config,
    tp: &TheoryParams,
    trials: usize,
    order_stat_trials: usize,
    seed: u64,
) -> Result<serde_json::Value> {
    let mut sphere = Vec::new();
    for j in 0..tp.k {
        let lambdas = tp.max_affinity(j);
        let entry = match lemma1_check(&lambdas, tp.g1, trials, substream(seed, 0x100 + j as u64)) {
            Ok(check) => json!({ "cluster": j, "check": check }),
            Err(e) => json!({ "cluster": j, "error": e.to_string() }),
        };
        sphere.push(entry);
    }

    let f_m = cfg.usize_opt("f_m")?.unwrap_or(10);
    let f_n = cfg.usize_opt("f_n")?.unwrap_or(10);
    let f_q = cfg.f64_opt("f_q")?.unwrap_or(3.0);
    let f_tail = corollary1_check(f_m, f_n, f_q, trials, substream(seed, 0x200))?;

    let n_j = *tp.counts.iter().max().expect("validated nonempty counts");
    let t_sq = (tp.t_constant() * tp.t_constant()).min(1.0);
    let order_stat = lemma3_mc(tp.d, tp.d_max, n_j, t_sq, order_stat_trials, substream(seed, 0x300))?;

    Ok(json!({
        "trials": trials,
        "sphere_deviation": sphere,
        "f_tail": { "m": f_m, "n": f_n, "q": f_q, "check": f_tail },
        "order_statistic": {
            "n_j": n_j, "t_sq": t_sq, "trials": order_stat_trials, "check": order_stat,
        },
    }))
}
