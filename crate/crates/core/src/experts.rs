//! Regression experts for the dataset experiment: CSV ingestion, kernel
//! ridge and linear least-squares models, and the per-round losses they
//! induce.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.10;
pub const RBF_BANDWIDTHS: [f64; 5] = [1e-2, 1e-1, 1.0, 10.0, 100.0];
pub const LAPLACIAN_BANDWIDTHS: [f64; 3] = [1e-2, 1.0, 100.0];
pub const POOL_SIZE: usize = RBF_BANDWIDTHS.len() + LAPLACIAN_BANDWIDTHS.len() + 1;

/// Rows of features and targets. The first `train_len` rows form the
/// training prefix; the rest are played as rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub train_len: usize,
}

impl Dataset {
    /// Builds a dataset from raw values, optionally min-max scaling every
    /// column with training-prefix statistics (later rows are clipped).
    pub fn from_rows(
        feature_names: Vec<String>,
        mut features: Vec<Vec<f64>>,
        mut targets: Vec<f64>,
        train_fraction: f64,
        normalize: bool,
    ) -> Result<Self> {
        let n = targets.len();
        if n == 0 {
            return Err(Error::Ingest("dataset has no rows".into()));
        }
        if features.len() != n {
            return Err(Error::Ingest(format!("{} feature rows for {n} targets", features.len())));
        }
        let d = feature_names.len();
        if let Some(r) = features.iter().position(|row| row.len() != d) {
            return Err(Error::Ingest(format!("row {} has {} features, expected {d}", r + 1, features[r].len())));
        }
        if !(train_fraction > 0.0 && train_fraction <= 1.0) {
            return Err(Error::arg(format!("training fraction {train_fraction} outside (0, 1]")));
        }
        let train_len = ((n as f64 * train_fraction).ceil() as usize).clamp(1, n);

        if normalize {
            for c in 0..d {
                let (lo, hi) = min_max(features[..train_len].iter().map(|row| row[c]));
                for row in &mut features {
                    row[c] = scale(row[c], lo, hi);
                }
            }
            let (lo, hi) = min_max(targets[..train_len].iter().copied());
            for y in &mut targets {
                *y = scale(*y, lo, hi);
            }
        } else if let Some(r) = targets.iter().position(|y| !(0.0..=1.0).contains(y)) {
            return Err(Error::Ingest(format!(
                "row {}: target {} outside [0, 1] and normalization is off",
                r + 1,
                targets[r]
            )));
        }
        Ok(Dataset {
            feature_names,
            features,
            targets,
            train_len,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Rows after the training prefix.
    pub fn eval_len(&self) -> usize {
        self.len() - self.train_len
    }

    /// Size checks for running the full experiment.
    pub fn check_experiment_ready(&self) -> Result<()> {
        if self.len() < 20 {
            return Err(Error::Ingest(format!("dataset has {} rows, at least 20 are needed", self.len())));
        }
        if self.train_len < 10 {
            return Err(Error::Ingest(format!(
                "training prefix has {} rows, at least 10 are needed",
                self.train_len
            )));
        }
        Ok(())
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn scale(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Reads a CSV with a header row. Every column other than `target_column`
/// is a feature.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str, normalize: bool) -> Result<Dataset> {
    load_csv_with(path, target_column, normalize, DEFAULT_TRAIN_FRACTION)
}

pub fn load_csv_with(
    path: impl AsRef<Path>,
    target_column: &str,
    normalize: bool,
    train_fraction: f64,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Ingest(format!("{}: {e}", path.display())))?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() {
        return Err(Error::Ingest(format!("{}: empty file", path.display())));
    }
    let target = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::Ingest(format!("target column `{target_column}` not found in {}", path.display())))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != target)
        .map(|(_, h)| h.to_string())
        .collect();

    let mut features = Vec::new();
    let mut targets = Vec::new();
    for (r, record) in reader.records().enumerate() {
        // Header is line 1.
        let line = r + 2;
        let record = record.map_err(|e| Error::Ingest(format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(Error::Ingest(format!(
                "line {line}: {} cells, expected {}",
                record.len(),
                headers.len()
            )));
        }
        let mut row = Vec::with_capacity(feature_names.len());
        for (c, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                Error::Ingest(format!("line {line}, column `{}`: non-numeric value `{cell}`", &headers[c]))
            })?;
            if c == target {
                targets.push(v);
            } else {
                row.push(v);
            }
        }
        features.push(row);
    }
    if targets.is_empty() {
        return Err(Error::Ingest(format!("{}: no data rows", path.display())));
    }
    Dataset::from_rows(feature_names, features, targets, train_fraction, normalize)
}

/// Writes a Friedman-style regression problem with ten uniform features
/// (five informative) and Gaussian noise to `path`; the target column is `y`.
pub fn write_synthetic_csv(path: impl AsRef<Path>, rows: usize, seed: u64) -> Result<()> {
    let mut rng = rng::stream(seed, Stream::Losses);
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=10).map(|c| format!("x{c}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for _ in 0..rows {
        let x: Vec<f64> = (0..10).map(|_| rng.gen::<f64>()).collect();
        let noise: f64 = rng.sample(StandardNormal);
        let y = 10.0 * (std::f64::consts::PI * x[0] * x[1]).sin()
            + 20.0 * (x[2] - 0.5).powi(2)
            + 10.0 * x[3]
            + 5.0 * x[4]
            + noise;
        let mut record: Vec<String> = x.iter().map(|v| format!("{v:.6}")).collect();
        record.push(format!("{y:.6}"));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    /// `exp(-|x1 - x2|_2^2 / (2 sigma^2))`
    Rbf,
    /// `exp(-|x1 - x2|_1 / sigma)`
    Laplacian,
}

pub fn kernel_eval(kind: KernelKind, sigma: f64, x1: &[f64], x2: &[f64]) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::arg(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    if x1.len() != x2.len() {
        return Err(Error::arg(format!("dimension mismatch: {} vs {}", x1.len(), x2.len())));
    }
    Ok(kernel_unchecked(kind, sigma, x1, x2))
}

fn kernel_unchecked(kind: KernelKind, sigma: f64, x1: &[f64], x2: &[f64]) -> f64 {
    let pairs = x1.iter().zip(x2);
    match kind {
        KernelKind::Rbf => {
            let d2: f64 = pairs.map(|(a, b)| (a - b) * (a - b)).sum();
            (-d2 / (2.0 * sigma * sigma)).exp()
        }
        KernelKind::Laplacian => {
            let d1: f64 = pairs.map(|(a, b)| (a - b).abs()).sum();
            (-d1 / sigma).exp()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExpertKind {
    KernelRidge { kernel: KernelKind, sigma: f64 },
    /// Least squares with an intercept.
    Linear,
}

/// A trained regressor. Kernel models keep their training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertModel {
    pub kind: ExpertKind,
    /// Dual coefficients for kernel models; weights then intercept for the
    /// linear model.
    pub coefficients: Vec<f64>,
    pub support: Vec<Vec<f64>>,
}

impl ExpertModel {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.kind {
            ExpertKind::KernelRidge { kernel, sigma } => self
                .support
                .iter()
                .zip(&self.coefficients)
                .map(|(s, a)| a * kernel_unchecked(kernel, sigma, s, x))
                .sum(),
            ExpertKind::Linear => {
                let (w, b) = self.coefficients.split_at(self.coefficients.len() - 1);
                w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + b[0]
            }
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            ExpertKind::KernelRidge { kernel: KernelKind::Rbf, sigma } => format!("rbf({sigma})"),
            ExpertKind::KernelRidge { kernel: KernelKind::Laplacian, sigma } => format!("laplacian({sigma})"),
            ExpertKind::Linear => "linear".into(),
        }
    }
}

/// Solves `(G + lambda I) a = y`.
pub fn train_kernel_ridge(kernel: KernelKind, sigma: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> Result<ExpertModel> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::arg("kernel ridge needs matching, non-empty inputs and targets"));
    }
    kernel_eval(kernel, sigma, &xs[0], &xs[0])?;
    let n = xs.len();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        kernel_unchecked(kernel, sigma, &xs[i], &xs[j]) + if i == j { lambda } else { 0.0 }
    });
    let y = DVector::from_column_slice(ys);
    let a = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&y),
        None => gram
            .lu()
            .solve(&y)
            .ok_or_else(|| Error::Solver(format!("singular kernel system (sigma = {sigma}, lambda = {lambda})")))?,
    };
    Ok(ExpertModel {
        kind: ExpertKind::KernelRidge { kernel, sigma },
        coefficients: a.iter().copied().collect(),
        support: xs.to_vec(),
    })
}

/// Ordinary least squares with an intercept, minimum-norm when rank deficient.
pub fn train_linear(xs: &[Vec<f64>], ys: &[f64]) -> Result<ExpertModel> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::arg("least squares needs matching, non-empty inputs and targets"));
    }
    let d = xs[0].len();
    let design = DMatrix::from_fn(xs.len(), d + 1, |r, c| if c < d { xs[r][c] } else { 1.0 });
    let y = DVector::from_column_slice(ys);
    let beta = design
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| Error::Solver(e.to_string()))?;
    Ok(ExpertModel {
        kind: ExpertKind::Linear,
        coefficients: beta.iter().copied().collect(),
        support: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingOptions {
    pub lambda: f64,
    /// Kernel models use at most this many training rows, evenly spaced.
    pub max_kernel_rows: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        TrainingOptions {
            lambda: 1.0,
            max_kernel_rows: 500,
        }
    }
}

/// The nine experts: five RBF and three Laplacian kernel ridge models plus
/// linear least squares, in that order.
pub fn train_expert_pool(d: &Dataset) -> Result<Vec<ExpertModel>> {
    train_expert_pool_with(d, TrainingOptions::default())
}

pub fn train_expert_pool_with(d: &Dataset, opts: TrainingOptions) -> Result<Vec<ExpertModel>> {
    if d.train_len < 10 {
        return Err(Error::Ingest(format!("training prefix has {} rows, at least 10 are needed", d.train_len)));
    }
    if opts.max_kernel_rows == 0 {
        return Err(Error::arg("max_kernel_rows must be at least 1"));
    }
    let xs = &d.features[..d.train_len];
    let ys = &d.targets[..d.train_len];
    let picked: Vec<usize> = if xs.len() > opts.max_kernel_rows {
        (0..opts.max_kernel_rows).map(|i| i * xs.len() / opts.max_kernel_rows).collect()
    } else {
        (0..xs.len()).collect()
    };
    let kx: Vec<Vec<f64>> = picked.iter().map(|&i| xs[i].clone()).collect();
    let ky: Vec<f64> = picked.iter().map(|&i| ys[i]).collect();

    let mut kinds: Vec<ExpertKind> = RBF_BANDWIDTHS
        .iter()
        .map(|&sigma| ExpertKind::KernelRidge { kernel: KernelKind::Rbf, sigma })
        .chain(
            LAPLACIAN_BANDWIDTHS
                .iter()
                .map(|&sigma| ExpertKind::KernelRidge { kernel: KernelKind::Laplacian, sigma }),
        )
        .collect();
    kinds.push(ExpertKind::Linear);

    kinds
        .into_par_iter()
        .map(|kind| match kind {
            ExpertKind::KernelRidge { kernel, sigma } => train_kernel_ridge(kernel, sigma, &kx, &ky, opts.lambda),
            ExpertKind::Linear => train_linear(xs, ys),
        })
        .collect()
}

/// `clip((prediction - y)^2, 0, 1)`.
pub fn prediction_loss(model: &ExpertModel, x: &[f64], y: f64) -> f64 {
    let e = model.predict(x) - y;
    (e * e).clamp(0.0, 1.0)
}

/// Predictions and losses of a pool on the rows after the training prefix,
/// computed once and shared by every run.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    k: usize,
    predictions: Vec<f64>,
    losses: Vec<f64>,
    truths: Vec<f64>,
}

impl PredictionTable {
    pub fn build(pool: &[ExpertModel], d: &Dataset) -> Result<Self> {
        let k = pool.len();
        if k == 0 {
            return Err(Error::arg("expert pool is empty"));
        }
        let rows: Vec<usize> = (d.train_len..d.len()).collect();
        if rows.is_empty() {
            return Err(Error::Ingest("no rows after the training prefix".into()));
        }
        let predictions: Vec<f64> = rows
            .par_iter()
            .flat_map_iter(|&r| pool.iter().map(move |m| m.predict(&d.features[r])))
            .collect();
        let truths: Vec<f64> = rows.iter().map(|&r| d.targets[r]).collect();
        let losses = predictions
            .iter()
            .enumerate()
            .map(|(n, y_hat)| {
                let e = y_hat - truths[n / k];
                (e * e).clamp(0.0, 1.0)
            })
            .collect();
        Ok(PredictionTable {
            k,
            predictions,
            losses,
            truths,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.k
    }

    pub fn num_rows(&self) -> usize {
        self.truths.len()
    }

    pub fn losses(&self, row: usize) -> &[f64] {
        &self.losses[row * self.k..(row + 1) * self.k]
    }

    pub fn prediction(&self, row: usize, expert: usize) -> f64 {
        self.predictions[row * self.k + expert]
    }

    pub fn truth(&self, row: usize) -> f64 {
        self.truths[row]
    }

    /// Keeps only the first `rows` evaluation rows.
    pub fn truncated(mut self, rows: usize) -> Result<Self> {
        if rows == 0 || rows > self.num_rows() {
            return Err(Error::arg(format!("cannot keep {rows} of {} evaluation rows", self.num_rows())));
        }
        self.truths.truncate(rows);
        self.predictions.truncate(rows * self.k);
        self.losses.truncate(rows * self.k);
        Ok(self)
    }

    /// Mean squared error of each fixed expert over all rows.
    pub fn expert_mse(&self) -> Vec<f64> {
        let mut mse = vec![0.0; self.k];
        for (n, y_hat) in self.predictions.iter().enumerate() {
            let e = y_hat - self.truths[n / self.k];
            mse[n % self.k] += e * e;
        }
        mse.iter().map(|s| s / self.num_rows() as f64).collect()
    }
}

const POOL_FORMAT: &str = "graphbandit-experts";
const POOL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct PoolFile {
    format: String,
    version: u32,
    feature_names: Vec<String>,
    options: TrainingOptions,
    experts: Vec<ExpertModel>,
}

pub fn save_pool(path: impl AsRef<Path>, pool: &[ExpertModel], d: &Dataset, opts: TrainingOptions) -> Result<()> {
    let file = PoolFile {
        format: POOL_FORMAT.into(),
        version: POOL_VERSION,
        feature_names: d.feature_names.clone(),
        options: opts,
        experts: pool.to_vec(),
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &file).map_err(|e| Error::Snapshot(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_pool(path: impl AsRef<Path>) -> Result<Vec<ExpertModel>> {
    let file: PoolFile = serde_json::from_reader(BufReader::new(File::open(path)?))
        .map_err(|e| Error::Snapshot(e.to_string()))?;
    if file.format != POOL_FORMAT || file.version != POOL_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported model file {} v{}",
            file.format, file.version
        )));
    }
    Ok(file.experts)
}
