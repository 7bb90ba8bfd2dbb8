//! Python bindings. Every expert index crossing this boundary is 1-based.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use graphbandit::environment::AdversarySpec;
use graphbandit::estimator;
use graphbandit::experts::{load_csv_with, train_expert_pool, PredictionTable};
use graphbandit::graph::{self as core_graph, EdgeProbabilityTable, NominalGraph};
use graphbandit::harness::{
    run_experiment, AggregateResult, ExperimentConfig, ProbabilityGenerator, ProbabilitySource, Workload,
};
use graphbandit::policies::{self, Algorithm, LearnerConfig, Observation, Policy, RoundContext};
use graphbandit::schedulers;
use graphbandit::{Error, Schedule};

fn to_py(e: Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

fn zero_based(i: usize, k: usize) -> PyResult<usize> {
    if i == 0 || i > k {
        return Err(PyValueError::new_err(format!("expert {i} outside 1..={k}")));
    }
    Ok(i - 1)
}

fn parse<T: std::str::FromStr<Err = Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(to_py)
}

/// Directed feedback graph with mandatory self-loops.
#[pyclass(name = "Graph", module = "graphbandit", frozen)]
struct PyGraph {
    inner: NominalGraph,
}

#[pymethods]
impl PyGraph {
    #[staticmethod]
    fn complete(k: usize) -> PyResult<Self> {
        Ok(PyGraph {
            inner: NominalGraph::complete(k).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn bandit(k: usize) -> PyResult<Self> {
        Ok(PyGraph {
            inner: NominalGraph::bandit(k).map_err(to_py)?,
        })
    }

    /// Builds a graph from `(i, j)` pairs. Self-loops must be listed.
    #[staticmethod]
    fn from_edges(k: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let pairs = edges
            .into_iter()
            .map(|(i, j)| Ok((zero_based(i, k)?, zero_based(j, k)?)))
            .collect::<PyResult<Vec<_>>>()?;
        Ok(PyGraph {
            inner: NominalGraph::from_edges(k, &pairs).map_err(to_py)?,
        })
    }

    /// Parses the graph literal format. Returns the graph and the probability
    /// matrix, or `None` when the text carries no probabilities.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<(Self, Option<Vec<Vec<f64>>>)> {
        let lit = core_graph::parse_graph_literal(text).map_err(to_py)?;
        Ok((PyGraph { inner: lit.graph }, lit.probabilities.map(|p| p.to_matrix())))
    }

    #[getter]
    fn num_experts(&self) -> usize {
        self.inner.num_experts()
    }

    fn has_edge(&self, i: usize, j: usize) -> PyResult<bool> {
        let k = self.inner.num_experts();
        Ok(self.inner.has_edge(zero_based(i, k)?, zero_based(j, k)?))
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().map(|(i, j)| (i + 1, j + 1)).collect()
    }

    fn out_neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        let i = zero_based(i, self.inner.num_experts())?;
        Ok(self.inner.out_neighbors(i).map_err(to_py)?.to_one_based())
    }

    fn in_neighbors(&self, i: usize) -> PyResult<Vec<usize>> {
        let i = zero_based(i, self.inner.num_experts())?;
        Ok(self.inner.in_neighbors(i).map_err(to_py)?.to_one_based())
    }

    fn dominating_set(&self) -> Vec<usize> {
        core_graph::greedy_dominating_set(&self.inner).to_one_based()
    }

    fn independence_number(&self) -> PyResult<usize> {
        core_graph::independence_number(&self.inner).map_err(to_py)
    }

    /// `F_i`, the expected number of losses revealed by choosing `i`.
    fn expected_observations(&self, probabilities: Vec<Vec<f64>>, i: usize) -> PyResult<f64> {
        let p = EdgeProbabilityTable::from_matrix(&self.inner, &probabilities).map_err(to_py)?;
        let i = zero_based(i, self.inner.num_experts())?;
        core_graph::expected_observations(&self.inner, &p, i).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Graph(K={}, edges={})", self.inner.num_experts(), self.inner.num_edges())
    }
}

/// One learner driven round by round from Python.
#[pyclass(name = "Learner", module = "graphbandit")]
struct PyLearner {
    inner: policies::Learner,
}

#[pymethods]
impl PyLearner {
    #[new]
    #[pyo3(signature = (algorithm, k, seed=0, m=25, xi=1.0, schedule="inverse-sqrt", epsilon=None))]
    fn new(algorithm: &str, k: usize, seed: u64, m: usize, xi: f64, schedule: &str, epsilon: Option<f64>) -> PyResult<Self> {
        let mut config = LearnerConfig::new(parse::<Algorithm>(algorithm)?)
            .with_m(m)
            .with_xi(xi)
            .with_schedule(parse::<Schedule>(schedule)?);
        if let Some(eps) = epsilon {
            config = config.with_epsilon(eps);
        }
        Ok(PyLearner {
            inner: policies::Learner::new(config, k, seed).map_err(to_py)?,
        })
    }

    /// Chooses an expert for round `t`. Pass `probabilities` only in the
    /// informative setting.
    #[pyo3(signature = (t, graph, probabilities=None))]
    fn select(&mut self, t: u64, graph: &PyGraph, probabilities: Option<Vec<Vec<f64>>>) -> PyResult<usize> {
        let p = probabilities
            .map(|m| EdgeProbabilityTable::from_matrix(&graph.inner, &m))
            .transpose()
            .map_err(to_py)?;
        let ctx = RoundContext {
            t,
            graph: &graph.inner,
            probabilities: p.as_ref(),
        };
        Ok(self.inner.select(&ctx).map_err(to_py)? + 1)
    }

    /// Feeds back the revealed `(expert, loss)` pairs of round `t`.
    fn update(&mut self, t: u64, chosen: usize, observed: Vec<(usize, f64)>) -> PyResult<()> {
        let k = self.inner.num_experts();
        let observed = observed
            .into_iter()
            .map(|(j, loss)| Ok((zero_based(j, k)?, loss)))
            .collect::<PyResult<Vec<_>>>()?;
        let obs = Observation {
            round: t,
            chosen: zero_based(chosen, k)?,
            observed: &observed,
        };
        self.inner.update(&obs).map_err(to_py)
    }

    #[getter]
    fn algorithm(&self) -> String {
        self.inner.algorithm().to_string()
    }

    #[getter]
    fn num_experts(&self) -> usize {
        self.inner.num_experts()
    }

    #[getter]
    fn round(&self) -> u64 {
        self.inner.round()
    }

    #[getter]
    fn restarts(&self) -> u32 {
        self.inner.restarts()
    }

    /// Normalized weights `w / W`.
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().normalized()
    }

    /// Selection counts of the exploration phase so far.
    #[getter]
    fn explored(&self) -> Vec<usize> {
        self.inner.explored().to_vec()
    }

    /// PMF used for the pending selection, if it was drawn from the weights.
    fn pending_pmf(&self) -> Option<Vec<f64>> {
        self.inner.pending_pmf().map(|p| p.probs().to_vec())
    }

    /// Exp3-UP's current estimate of `p_ij`.
    fn estimated_probability(&self, i: usize, j: usize) -> PyResult<f64> {
        let k = self.inner.num_experts();
        let est = self
            .inner
            .estimator()
            .ok_or_else(|| PyValueError::new_err("only exp3-up estimates edge probabilities"))?;
        Ok(est.estimate(zero_based(i, k)?, zero_based(j, k)?))
    }

    fn snapshot(&self) -> PyResult<String> {
        self.inner.snapshot().map_err(to_py)
    }

    #[staticmethod]
    fn restore(text: &str) -> PyResult<Self> {
        Ok(PyLearner {
            inner: policies::Learner::restore(text).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!("Learner({}, K={}, round={})", self.inner.algorithm(), self.inner.num_experts(), self.inner.round())
    }
}

fn result_to_dict<'py>(py: Python<'py>, result: &AggregateResult) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    let summary = PyDict::new(py);
    for s in &result.summaries {
        let entry = PyDict::new(py);
        entry.set_item("mean", s.mean)?;
        entry.set_item("std", s.std)?;
        entry.set_item("runs", s.runs)?;
        summary.set_item((s.algorithm.to_string(), s.metric.name()), entry)?;
    }
    let series = PyDict::new(py);
    for s in &result.series {
        series.set_item((s.algorithm.to_string(), s.metric.name()), (s.mean.clone(), s.std.clone()))?;
    }
    let chosen = PyDict::new(py);
    for r in &result.runs {
        let picks: Vec<usize> = r.trace.chosen.iter().map(|c| c + 1).collect();
        chosen.set_item((r.algorithm.to_string(), r.seed), picks)?;
    }
    out.set_item("horizon", result.horizon)?;
    out.set_item("summary", summary)?;
    out.set_item("series", series)?;
    out.set_item("chosen", chosen)?;
    Ok(out)
}

struct Common {
    algorithms: Vec<Algorithm>,
    probabilities: ProbabilitySource,
    informative: bool,
    runs: usize,
    m: usize,
    xi: f64,
    schedule: Schedule,
    epsilon: Option<f64>,
    seed: u64,
}

impl Common {
    #[allow(clippy::too_many_arguments)]
    fn new(
        algorithms: Vec<String>,
        p: &str,
        informative: bool,
        runs: usize,
        m: usize,
        xi: f64,
        schedule: &str,
        epsilon: Option<f64>,
        seed: u64,
    ) -> PyResult<Self> {
        Ok(Common {
            algorithms: algorithms.iter().map(|a| parse::<Algorithm>(a)).collect::<PyResult<_>>()?,
            probabilities: ProbabilitySource::Generated(parse::<ProbabilityGenerator>(p)?),
            informative,
            runs,
            m,
            xi,
            schedule: parse::<Schedule>(schedule)?,
            epsilon,
            seed,
        })
    }

    fn config(self, graph: NominalGraph, workload: Workload) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(self.algorithms, graph, self.probabilities, workload);
        cfg.informative = self.informative;
        cfg.runs = self.runs;
        cfg.m = self.m;
        cfg.xi = self.xi;
        cfg.schedule = self.schedule;
        cfg.epsilon = self.epsilon;
        cfg.seed = self.seed;
        cfg
    }
}

/// Synthetic-adversary experiment. `adversary` is `(best, base, gap)` for a
/// stochastic gap, with `best` 1-based. Returns a dict with `summary`,
/// `series` and `chosen` entries.
#[pyfunction]
#[pyo3(signature = (
    algorithms, graph, horizon, p="equal:0.25", adversary=(1, 0.5, 0.1), runs=20, seed=0,
    informative=true, m=25, xi=1.0, schedule="inverse-sqrt", epsilon=None
))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    algorithms: Vec<String>,
    graph: &PyGraph,
    horizon: u64,
    p: &str,
    adversary: (usize, f64, f64),
    runs: usize,
    seed: u64,
    informative: bool,
    m: usize,
    xi: f64,
    schedule: &str,
    epsilon: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let k = graph.inner.num_experts();
    let (best, base, gap) = adversary;
    let spec = AdversarySpec::stochastic_gap(k, zero_based(best, k)?, base, gap).map_err(to_py)?;
    let cfg = Common::new(algorithms, p, informative, runs, m, xi, schedule, epsilon, seed)?
        .config(graph.inner.clone(), Workload::Synthetic { adversary: spec, horizon });
    let result = py.detach(|| run_experiment(&cfg)).map_err(to_py)?;
    result_to_dict(py, &result)
}

/// Trains the expert pool on a CSV file and runs the learners over the rows
/// after the training prefix on the complete graph.
#[pyfunction]
#[pyo3(signature = (
    path, target, algorithms, p="equal:0.25", runs=20, seed=0, informative=true,
    m=25, xi=1.0, schedule="inverse-sqrt", epsilon=None, train_fraction=0.1
))]
#[allow(clippy::too_many_arguments)]
fn dataset_experiment<'py>(
    py: Python<'py>,
    path: PathBuf,
    target: &str,
    algorithms: Vec<String>,
    p: &str,
    runs: usize,
    seed: u64,
    informative: bool,
    m: usize,
    xi: f64,
    schedule: &str,
    epsilon: Option<f64>,
    train_fraction: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let common = Common::new(algorithms, p, informative, runs, m, xi, schedule, epsilon, seed)?;
    let (result, expert_mse) = py
        .detach(|| -> graphbandit::Result<_> {
            let data = load_csv_with(&path, target, true, train_fraction)?;
            data.check_experiment_ready()?;
            let pool = train_expert_pool(&data)?;
            let table = PredictionTable::build(&pool, &data)?;
            let expert_mse: Vec<(String, f64)> =
                pool.iter().map(|e| e.label()).zip(table.expert_mse()).collect();
            let cfg = common.config(NominalGraph::complete(pool.len())?, Workload::Dataset { table: Arc::new(table) });
            Ok((run_experiment(&cfg)?, expert_mse))
        })
        .map_err(to_py)?;
    let out = result_to_dict(py, &result)?;
    out.set_item("experts", expert_mse)?;
    Ok(out)
}

/// `(eta, M, xi)` for epoch `b` of the Exp3-UP doubling schedule.
#[pyfunction]
fn up_doubling_params(b: u32, k: usize) -> PyResult<(f64, usize, Option<f64>)> {
    let p = schedulers::up_doubling_params(b, k).map_err(to_py)?;
    Ok((p.eta, p.m, p.xi))
}

/// `(eta, M)` for epoch `b` of the Exp3-GR doubling schedule.
#[pyfunction]
fn gr_doubling_params(b: u32, k: usize, dom_size: usize, epsilon: f64) -> PyResult<(f64, usize)> {
    let p = schedulers::gr_doubling_params(b, k, dom_size, epsilon).map_err(to_py)?;
    Ok((p.eta, p.m))
}

#[pyfunction]
fn importance_loss_estimate(loss: f64, q: f64, observed: bool) -> PyResult<f64> {
    estimator::importance_loss_estimate(loss, q, observed).map_err(to_py)
}

#[pyfunction]
fn algorithms() -> Vec<String> {
    Algorithm::ALL.iter().map(|a| a.to_string()).collect()
}

#[pymodule]
#[pyo3(name = "graphbandit")]
fn graphbandit_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyLearner>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(up_doubling_params, m)?)?;
    m.add_function(wrap_pyfunction!(gr_doubling_params, m)?)?;
    m.add_function(wrap_pyfunction!(importance_loss_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(algorithms, m)?)?;
    Ok(())
}
