//! Batch experiments: many seeds times many algorithms, run in parallel,
//! reduced to per-round means and standard deviations, and written as CSV.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::environment::{empirical_regret, run_episode, AdversarySpec, GraphSource, RunTrace};
use crate::error::{Error, Result};
use crate::experts::PredictionTable;
use crate::graph::{EdgeProbabilityTable, NominalGraph};
use crate::policies::{Algorithm, Learner, LearnerConfig};
use crate::rng::{self, Stream};
use crate::schedulers::Schedule;

/// Environment variable capping the worker threads of [`run_experiment`].
pub const THREADS_ENV: &str = "GRAPHBANDIT_THREADS";

/// How edge probabilities are drawn for each run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbabilityGenerator {
    Equal(f64),
    Uniform { lo: f64, hi: f64 },
}

impl ProbabilityGenerator {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ProbabilityGenerator::Equal(p) if p > 0.0 && p <= 1.0 => Ok(()),
            ProbabilityGenerator::Equal(p) => Err(Error::arg(format!("equal({p}) requires 0 < p <= 1"))),
            ProbabilityGenerator::Uniform { lo, hi } if lo > 0.0 && lo <= hi && hi <= 1.0 => Ok(()),
            ProbabilityGenerator::Uniform { lo, hi } => {
                Err(Error::arg(format!("uniform({lo}, {hi}) requires 0 < lo <= hi <= 1")))
            }
        }
    }

    /// Smallest probability the generator can produce.
    pub fn lower_bound(&self) -> f64 {
        match *self {
            ProbabilityGenerator::Equal(p) => p,
            ProbabilityGenerator::Uniform { lo, .. } => lo,
        }
    }

    /// The table for one run, drawn from the seed's probability stream.
    pub fn draw(&self, g: &NominalGraph, seed: u64) -> Result<EdgeProbabilityTable> {
        match *self {
            ProbabilityGenerator::Equal(p) => EdgeProbabilityTable::equal(g, p),
            ProbabilityGenerator::Uniform { lo, hi } => {
                EdgeProbabilityTable::uniform(g, lo, hi, &mut rng::stream(seed, Stream::Probabilities))
            }
        }
    }
}

impl FromStr for ProbabilityGenerator {
    type Err = Error;

    /// `equal:<p>` or `uniform:<lo>,<hi>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::arg(format!("invalid probability generator `{s}`; expected equal:<p> or uniform:<lo>,<hi>"));
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| bad());
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        let gen = match kind {
            "equal" => ProbabilityGenerator::Equal(num(rest)?),
            "uniform" => {
                let (lo, hi) = rest.split_once(',').ok_or_else(bad)?;
                ProbabilityGenerator::Uniform { lo: num(lo)?, hi: num(hi)? }
            }
            _ => return Err(bad()),
        };
        gen.validate()?;
        Ok(gen)
    }
}

impl fmt::Display for ProbabilityGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbabilityGenerator::Equal(p) => write!(f, "equal:{p}"),
            ProbabilityGenerator::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
        }
    }
}

/// Where each run's edge probabilities come from.
#[derive(Debug, Clone)]
pub enum ProbabilitySource {
    Generated(ProbabilityGenerator),
    /// Taken verbatim from a graph file.
    Fixed(EdgeProbabilityTable),
}

impl ProbabilitySource {
    fn lower_bound(&self) -> f64 {
        match self {
            ProbabilitySource::Generated(g) => g.lower_bound(),
            ProbabilitySource::Fixed(t) => t.epsilon(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Workload {
    /// Synthetic adversary; the metric is cumulative regret.
    Synthetic { adversary: AdversarySpec, horizon: u64 },
    /// Expert predictions on a dataset; running MSE is reported as well.
    Dataset { table: Arc<PredictionTable> },
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub graph: NominalGraph,
    pub probabilities: ProbabilitySource,
    /// Whether learners are shown the edge probabilities.
    pub informative: bool,
    pub runs: usize,
    pub workload: Workload,
    pub schedule: Schedule,
    pub m: usize,
    pub xi: f64,
    /// Lower bound on edge probabilities for the GR doubling schedule;
    /// defaults to the smallest probability the source can produce.
    pub epsilon: Option<f64>,
    /// Run `r` uses seed `seed + r`.
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(algorithms: Vec<Algorithm>, graph: NominalGraph, probabilities: ProbabilitySource, workload: Workload) -> Self {
        ExperimentConfig {
            algorithms,
            graph,
            probabilities,
            informative: true,
            runs: 20,
            workload,
            schedule: Schedule::InverseSqrt,
            m: 25,
            xi: 1.0,
            epsilon: None,
            seed: 0,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.runs as u64).map(|r| self.seed.wrapping_add(r)).collect()
    }

    pub fn horizon(&self) -> u64 {
        match &self.workload {
            Workload::Synthetic { horizon, .. } => *horizon,
            Workload::Dataset { table } => table.num_rows() as u64,
        }
    }

    fn adversary(&self) -> AdversarySpec {
        match &self.workload {
            Workload::Synthetic { adversary, .. } => adversary.clone(),
            Workload::Dataset { table } => AdversarySpec::Dataset(Arc::clone(table)),
        }
    }

    pub fn learner_config(&self, algorithm: Algorithm) -> LearnerConfig {
        let mut cfg = LearnerConfig::new(algorithm)
            .with_schedule(self.schedule)
            .with_m(self.m)
            .with_xi(self.xi);
        cfg.epsilon = Some(self.epsilon.unwrap_or_else(|| self.probabilities.lower_bound()));
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::arg("no algorithm selected"));
        }
        if self.runs == 0 {
            return Err(Error::arg("runs must be at least 1"));
        }
        if self.horizon() == 0 {
            return Err(Error::arg("horizon must be at least 1"));
        }
        let k = self.graph.num_experts();
        match &self.probabilities {
            ProbabilitySource::Generated(g) => g.validate()?,
            ProbabilitySource::Fixed(t) => t.check_consistent(&self.graph)?,
        }
        let adversary = self.adversary();
        if adversary.num_experts() != k {
            return Err(Error::arg(format!(
                "the graph has K = {k} but the loss source has {} experts",
                adversary.num_experts()
            )));
        }
        if let Some(max) = adversary.max_horizon() {
            if self.horizon() > max {
                return Err(Error::arg(format!("horizon {} exceeds the {max} available rounds", self.horizon())));
            }
        }
        if !self.informative && self.algorithms.contains(&Algorithm::Exp3Ip) {
            return Err(Error::arg("exp3-ip needs the informative setting"));
        }
        for &alg in &self.algorithms {
            self.learner_config(alg).validate()?;
        }
        Ok(())
    }
}

/// One finished episode.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub probabilities: EdgeProbabilityTable,
    pub trace: RunTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Regret,
    Mse,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Regret => "regret",
            Metric::Mse => "mse",
        }
    }
}

/// Per-round mean and sample standard deviation of one metric for one
/// algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, Default)]
pub struct AggregateResult {
    pub horizon: usize,
    pub series: Vec<Series>,
    pub summaries: Vec<Summary>,
    pub runs: Vec<RunRecord>,
}

impl AggregateResult {
    pub fn series(&self, algorithm: Algorithm, metric: Metric) -> Option<&Series> {
        self.series.iter().find(|s| s.algorithm == algorithm && s.metric == metric)
    }

    pub fn summary(&self, algorithm: Algorithm, metric: Metric) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.algorithm == algorithm && s.metric == metric)
    }

    pub fn runs_of(&self, algorithm: Algorithm) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.algorithm == algorithm)
    }
}

/// Mean over runs of each run's average squared error up to round `t`.
pub fn running_mse(predictions: &[Vec<f64>], truths: &[f64], t: usize) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::arg("no runs"));
    }
    if t == 0 || t > truths.len() {
        return Err(Error::arg(format!("round {t} outside 1..={}", truths.len())));
    }
    let mut total = 0.0;
    for (n, run) in predictions.iter().enumerate() {
        if run.len() < t {
            return Err(Error::arg(format!("run {} has {} predictions, need {t}", n + 1, run.len())));
        }
        let sq: f64 = run[..t].iter().zip(&truths[..t]).map(|(y_hat, y)| (y_hat - y).powi(2)).sum();
        total += sq / t as f64;
    }
    Ok(total / predictions.len() as f64)
}

/// Running MSE after every round of one run.
pub fn mse_curve(trace: &RunTrace) -> Vec<f64> {
    let mut sum = 0.0;
    trace
        .squared_errors()
        .into_iter()
        .enumerate()
        .map(|(n, e)| {
            sum += e;
            sum / (n + 1) as f64
        })
        .collect()
}

/// Sample mean and standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::arg(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::arg(format!("cannot start worker threads: {e}")))
}

/// Runs every `(seed, algorithm)` episode and aggregates the results. Within
/// a seed all algorithms face the same losses and the same edge
/// probabilities.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateResult> {
    cfg.validate()?;
    let horizon = cfg.horizon();
    let adversary = cfg.adversary();
    let seeds = cfg.seeds();

    let tables = seeds
        .iter()
        .map(|&seed| match &cfg.probabilities {
            ProbabilitySource::Generated(g) => g.draw(&cfg.graph, seed),
            ProbabilitySource::Fixed(t) => Ok(t.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Algorithm)> = (0..seeds.len())
        .flat_map(|r| cfg.algorithms.iter().map(move |&a| (r, a)))
        .collect();

    let runs = thread_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(r, algorithm)| {
                let seed = seeds[r];
                let wrap = |e: Error| Error::InRun {
                    algorithm: algorithm.to_string(),
                    seed,
                    source: Box::new(e),
                };
                let source = GraphSource::fixed(cfg.graph.clone(), tables[r].clone()).map_err(wrap)?;
                let learner = Learner::new(cfg.learner_config(algorithm), cfg.graph.num_experts(), seed).map_err(wrap)?;
                let trace = run_episode(learner, &adversary, &source, cfg.informative, horizon, seed).map_err(wrap)?;
                Ok(RunRecord {
                    algorithm,
                    seed,
                    probabilities: tables[r].clone(),
                    trace,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut metrics = vec![Metric::Regret];
    if matches!(cfg.workload, Workload::Dataset { .. }) {
        metrics.push(Metric::Mse);
    }
    Ok(aggregate(&cfg.algorithms, &metrics, horizon as usize, runs))
}

/// Reduces per-run traces to per-round statistics.
pub fn aggregate(algorithms: &[Algorithm], metrics: &[Metric], horizon: usize, runs: Vec<RunRecord>) -> AggregateResult {
    let mut series = Vec::new();
    let mut summaries = Vec::new();
    for &algorithm in algorithms {
        for &metric in metrics {
            let curves: Vec<Vec<f64>> = runs
                .iter()
                .filter(|r| r.algorithm == algorithm)
                .map(|r| match metric {
                    Metric::Regret => r.trace.regret_curve(),
                    Metric::Mse => mse_curve(&r.trace),
                })
                .collect();
            let mut mean = Vec::with_capacity(horizon);
            let mut std = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let column: Vec<f64> = curves.iter().map(|c| c[t]).collect();
                let (m, s) = mean_std(&column);
                mean.push(m);
                std.push(s);
            }
            let finals: Vec<f64> = match metric {
                Metric::Regret => runs
                    .iter()
                    .filter(|r| r.algorithm == algorithm)
                    .map(|r| empirical_regret(&r.trace))
                    .collect(),
                Metric::Mse => curves.iter().map(|c| c[horizon - 1]).collect(),
            };
            let (m, s) = mean_std(&finals);
            summaries.push(Summary {
                algorithm,
                metric,
                mean: m,
                std: s,
                runs: finals.len(),
            });
            series.push(Series {
                algorithm,
                metric,
                mean,
                std,
            });
        }
    }
    AggregateResult {
        horizon,
        series,
        summaries,
        runs,
    }
}

/// Rounds at which results are written: every `ceil(T / 200)` rounds, plus
/// the last round.
pub fn checkpoints(horizon: usize) -> Vec<usize> {
    if horizon == 0 {
        return Vec::new();
    }
    let step = horizon.div_ceil(200);
    let mut out: Vec<usize> = (1..).map(|n| n * step).take_while(|&t| t <= horizon).collect();
    if out.last() != Some(&horizon) {
        out.push(horizon);
    }
    out
}

/// Writes `t,algorithm,metric,mean,std` rows at the checkpoints to `path`
/// and the final values to `summary.csv` in the same directory.
pub fn emit_results(result: &AggregateResult, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,algorithm,metric,mean,std")?;
    for t in checkpoints(result.horizon) {
        for s in &result.series {
            writeln!(w, "{t},{},{},{},{}", s.algorithm, s.metric.name(), s.mean[t - 1], s.std[t - 1])?;
        }
    }
    w.flush()?;

    let mut w = BufWriter::new(File::create(path.with_file_name("summary.csv"))?);
    writeln!(w, "algorithm,metric,mean,std,runs")?;
    for s in &result.summaries {
        writeln!(w, "{},{},{},{},{}", s.algorithm, s.metric.name(), s.mean, s.std, s.runs)?;
    }
    w.flush()?;
    Ok(())
}

/// Logs the edge probabilities each seed used, as `seed,i,j,p` with 1-based
/// endpoints.
pub fn emit_probability_log(result: &AggregateResult, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "seed,i,j,p")?;
    let mut seen = Vec::new();
    for run in &result.runs {
        if seen.contains(&run.seed) {
            continue;
        }
        seen.push(run.seed);
        let m = run.probabilities.to_matrix();
        for (i, row) in m.iter().enumerate() {
            for (j, &p) in row.iter().enumerate() {
                if p > 0.0 {
                    writeln!(w, "{},{},{},{p}", run.seed, i + 1, j + 1)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn running_mse_examples() {
        let truths = vec![0.5; 4];
        assert_eq!(running_mse(&[truths.clone(), truths.clone()], &truths, 4).unwrap(), 0.0);
        let off = vec![vec![0.6; 4]];
        for t in 1..=4 {
            assert!((running_mse(&off, &truths, t).unwrap() - 0.01).abs() < 1e-15);
        }
        let two = vec![vec![0.7], vec![0.9]];
        assert!((running_mse(&two, &[0.5], 1).unwrap() - 0.10).abs() < 1e-15);
        assert!(running_mse(&two, &[0.5], 2).is_err());
        assert!(running_mse(&[vec![0.1]], &[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn generator_parsing() {
        assert_eq!("equal:0.25".parse::<ProbabilityGenerator>().unwrap(), ProbabilityGenerator::Equal(0.25));
        assert_eq!(
            "uniform:0.25,0.5".parse::<ProbabilityGenerator>().unwrap(),
            ProbabilityGenerator::Uniform { lo: 0.25, hi: 0.5 }
        );
        for bad in ["uniform:0.5,0.25", "uniform:0,0.5", "equal:1.5", "beta:1,2", "equal"] {
            assert!(bad.parse::<ProbabilityGenerator>().is_err(), "{bad}");
        }
    }

    #[test]
    fn checkpoint_spacing() {
        assert_eq!(checkpoints(3), vec![1, 2, 3]);
        assert_eq!(checkpoints(1000), (1..=200).map(|n| n * 5).collect::<Vec<_>>());
        assert_eq!(*checkpoints(1001).last().unwrap(), 1001);
        assert!(checkpoints(0).is_empty());
    }

    #[test]
    fn mean_std_of_small_samples() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
    }
}
