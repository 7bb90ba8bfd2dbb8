//! The learners: Exp3-IP, Exp3-UP, Exp3-GR and the Exp3 / Exp3-DOM
//! baselines, all driven through [`Policy`].
//!
//! A round is `select` followed by `update`. `select` sees the nominal graph
//! (and, in the informative setting, the edge probabilities); `update` sees
//! only the losses that were actually revealed.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    exp_weight_update, importance_loss_estimate, mixed_pmf, Pmf, WeightVector,
};
use crate::graph::{
    expected_observations, greedy_dominating_set, EdgeProbabilityTable, NominalGraph, VertexSet,
};
use crate::rng::{self, Stream, StreamRng};
use crate::schedulers::{
    epoch_for_round, gr_doubling_params, inverse_sqrt_eta, ip_doubling_step, ip_eta, up_doubling_params,
    up_start_epoch, DoublingState, EpochParams, Schedule,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    /// Bandit-feedback baseline; ignores side observations.
    Exp3,
    /// Treats the nominal graph as exact (every edge probability one).
    Exp3Dom,
    /// Informative setting: edge probabilities are revealed.
    Exp3Ip,
    /// Uninformative setting, estimated edge probabilities.
    Exp3Up,
    /// Uninformative setting, geometric resampling.
    Exp3Gr,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Exp3,
        Algorithm::Exp3Dom,
        Algorithm::Exp3Ip,
        Algorithm::Exp3Up,
        Algorithm::Exp3Gr,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Exp3 => "exp3",
            Algorithm::Exp3Dom => "exp3-dom",
            Algorithm::Exp3Ip => "exp3-ip",
            Algorithm::Exp3Up => "exp3-up",
            Algorithm::Exp3Gr => "exp3-gr",
        }
    }

    /// Exp3-UP and Exp3-GR assume a graph that never changes.
    pub fn requires_static_graph(&self) -> bool {
        matches!(self, Algorithm::Exp3Up | Algorithm::Exp3Gr)
    }

    pub fn has_exploration_phase(&self) -> bool {
        self.requires_static_graph()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::arg(format!("unknown algorithm `{s}`")))
    }
}

/// Construction parameters for a [`Learner`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub schedule: Schedule,
    /// Minimum observation count per edge (UP/GR, non-doubling schedules).
    pub m: usize,
    /// Confidence width (UP, non-doubling schedules).
    pub xi: f64,
    /// Lower bound on edge probabilities, needed by the GR doubling schedule.
    pub epsilon: Option<f64>,
}

impl LearnerConfig {
    /// `M = 25`, `xi = 1`, `eta_t = 1/sqrt(t)`.
    pub fn new(algorithm: Algorithm) -> Self {
        LearnerConfig {
            algorithm,
            schedule: Schedule::InverseSqrt,
            m: 25,
            xi: 1.0,
            epsilon: None,
        }
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_m(mut self, m: usize) -> Self {
        self.m = m;
        self
    }

    pub fn with_xi(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.m == 0 {
            return Err(Error::arg("M must be at least 1"));
        }
        if !(self.xi >= 1.0 && self.xi.is_finite()) {
            return Err(Error::arg(format!("xi must be finite and >= 1, got {}", self.xi)));
        }
        if let Some(eps) = self.epsilon {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(Error::arg(format!("epsilon {eps} outside (0, 1]")));
            }
        }
        if self.algorithm == Algorithm::Exp3Gr && self.schedule == Schedule::Doubling && self.epsilon.is_none() {
            return Err(Error::arg("the Exp3-GR doubling schedule needs a lower bound epsilon"));
        }
        Ok(())
    }
}

/// What the learner is shown before choosing in round `t` (1-based).
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub t: u64,
    pub graph: &'a NominalGraph,
    /// Present only in the informative setting.
    pub probabilities: Option<&'a EdgeProbabilityTable>,
}

/// What the learner is shown after choosing: the revealed `(expert, loss)`
/// pairs. The incurred loss is deliberately absent.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub round: u64,
    pub chosen: usize,
    pub observed: &'a [(usize, f64)],
}

pub trait Policy {
    fn select(&mut self, ctx: &RoundContext<'_>) -> Result<usize>;
    fn update(&mut self, obs: &Observation<'_>) -> Result<()>;
    fn name(&self) -> String;

    /// Learners that cannot follow a changing graph.
    fn requires_static_graph(&self) -> bool {
        false
    }
}

// ---------------------------------------------------------------------------
// Exp3-IP kernels

/// `pi_i = (1 - eta) w_i / W + eta F_i / (sum_{j in D} F_j) 1[i in D]`.
pub fn exp3ip_pmf(
    w: &WeightVector,
    eta: f64,
    g: &NominalGraph,
    p: &EdgeProbabilityTable,
    dominating: &VertexSet,
) -> Result<Pmf> {
    let k = g.num_experts();
    if w.len() != k {
        return Err(Error::arg("weight vector does not match the graph"));
    }
    if dominating.is_empty() {
        return Err(Error::arg("dominating set is empty"));
    }
    let mut exploration = vec![0.0; k];
    let mut total = 0.0;
    for i in dominating.iter() {
        let f = expected_observations(g, p, i)?;
        exploration[i] = f;
        total += f;
    }
    if !(total > 0.0) {
        return Err(Error::InvariantViolation(
            "expected observations over the dominating set sum to zero".into(),
        ));
    }
    for e in &mut exploration {
        *e /= total;
    }
    mixed_pmf(w, eta, &exploration)
}

/// `q_i = sum_{j in N_in(i)} pi_j p_ji`.
pub fn exp3ip_observation_prob(pmf: &Pmf, g: &NominalGraph, p: &EdgeProbabilityTable, i: usize) -> Result<f64> {
    if i >= g.num_experts() {
        return Err(Error::IndexOutOfRange { index: i, k: g.num_experts() });
    }
    Ok(g.in_iter(i).map(|j| pmf.get(j) * p.get(j, i)).sum())
}

// ---------------------------------------------------------------------------
// Exploration phase

/// Expert explored in round `t` of the initial `K M` rounds: `(t - 1) mod K`
/// (0-based), so every expert is chosen exactly `M` times.
pub fn exploration_index(t: u64, k: usize, m: usize) -> Result<usize> {
    if k == 0 {
        return Err(Error::arg("K must be at least 1"));
    }
    let phase = k as u64 * m as u64;
    if t == 0 || t > phase {
        return Err(Error::arg(format!("round {t} is outside the exploration phase 1..={phase}")));
    }
    Ok(((t - 1) % k as u64) as usize)
}

// ---------------------------------------------------------------------------
// Exp3-UP kernels

/// Per-edge sample means of the activation indicators `X_ij`, collected on
/// rounds where `i` was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimatorState {
    k: usize,
    counts: Vec<u64>,
    sums: Vec<u64>,
}

impl ProbabilityEstimatorState {
    pub fn new(k: usize) -> Self {
        ProbabilityEstimatorState {
            k,
            counts: vec![0; k * k],
            sums: vec![0; k * k],
        }
    }

    pub fn count(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.k + j]
    }

    /// Sample mean, or zero before any sample.
    pub fn estimate(&self, i: usize, j: usize) -> f64 {
        let c = self.count(i, j);
        if c == 0 {
            0.0
        } else {
            self.sums[i * self.k + j] as f64 / c as f64
        }
    }

    /// Records one round in which `chosen` was played. `realized` must list
    /// every out-neighbor of `chosen` exactly once with its activation.
    pub fn update(&mut self, chosen: usize, g: &NominalGraph, realized: &[(usize, bool)]) -> Result<()> {
        if chosen >= self.k || g.num_experts() != self.k {
            return Err(Error::IndexOutOfRange { index: chosen, k: self.k });
        }
        let mut seen = vec![false; self.k];
        for &(j, _) in realized {
            if j >= self.k || !g.has_edge(chosen, j) {
                return Err(Error::Contract(format!(
                    "activation reported for non-edge ({}, {})",
                    chosen + 1,
                    j + 1
                )));
            }
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Contract(format!("duplicate activation for edge ({}, {})", chosen + 1, j + 1)));
            }
        }
        if let Some(j) = g.out_iter(chosen).find(|&j| !seen[j]) {
            return Err(Error::Contract(format!("missing activation for edge ({}, {})", chosen + 1, j + 1)));
        }
        for &(j, x) in realized {
            let e = chosen * self.k + j;
            self.counts[e] += 1;
            self.sums[e] += x as u64;
        }
        Ok(())
    }
}

/// `q_hat_i = sum_{j in N_in(i)} pi_j (p_hat_ji + xi / sqrt(M))`. Not clamped;
/// it can exceed one.
pub fn exp3up_qhat(
    pmf: &Pmf,
    g: &NominalGraph,
    state: &ProbabilityEstimatorState,
    xi: f64,
    m: usize,
    i: usize,
) -> Result<f64> {
    if i >= g.num_experts() {
        return Err(Error::IndexOutOfRange { index: i, k: g.num_experts() });
    }
    let inflation = xi / (m as f64).sqrt();
    let mut q = 0.0;
    for j in g.in_iter(i) {
        if state.count(j, i) < m as u64 {
            return Err(Error::PhaseOrder(format!(
                "edge ({}, {}) has {} samples, fewer than M = {m}",
                j + 1,
                i + 1,
                state.count(j, i)
            )));
        }
        q += pmf.get(j) * (state.estimate(j, i) + inflation);
    }
    Ok(q)
}

/// `loss / q_hat` when observed, zero otherwise.
pub fn exp3up_loss_estimate(loss: f64, qhat: f64, observed: bool) -> Result<f64> {
    importance_loss_estimate(loss, qhat, observed)
}

/// `pi_i = (1 - eta) w_i / W + (eta / |D|) 1[i in D]`; shared by Exp3-UP and
/// Exp3-GR.
pub fn exp3up_pmf(w: &WeightVector, eta: f64, dominating: &VertexSet) -> Result<Pmf> {
    if dominating.is_empty() {
        return Err(Error::arg("dominating set is empty"));
    }
    let mut exploration = vec![0.0; w.len()];
    let share = 1.0 / dominating.len() as f64;
    for i in dominating.iter() {
        if i >= w.len() {
            return Err(Error::IndexOutOfRange { index: i, k: w.len() });
        }
        exploration[i] = share;
    }
    mixed_pmf(w, eta, &exploration)
}

// ---------------------------------------------------------------------------
// Exp3-GR kernels

/// The most recent activation samples of every edge, up to a capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleBuffer {
    k: usize,
    capacity: usize,
    samples: Vec<VecDeque<bool>>,
}

impl ResampleBuffer {
    pub fn new(k: usize, capacity: usize) -> Self {
        ResampleBuffer {
            k,
            capacity,
            samples: vec![VecDeque::new(); k * k],
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Raising the capacity keeps existing samples.
    pub fn set_capacity(&mut self, capacity: usize) {
        self.capacity = capacity;
        for buf in &mut self.samples {
            while buf.len() > capacity {
                buf.pop_front();
            }
        }
    }

    pub fn push(&mut self, i: usize, j: usize, x: bool) {
        let buf = &mut self.samples[i * self.k + j];
        buf.push_back(x);
        if buf.len() > self.capacity {
            buf.pop_front();
        }
    }

    pub fn len(&self, i: usize, j: usize) -> usize {
        self.samples[i * self.k + j].len()
    }

    pub fn samples(&self, i: usize, j: usize) -> impl Iterator<Item = bool> + '_ {
        self.samples[i * self.k + j].iter().copied()
    }

    /// True when every edge of `g` holds at least `m` samples.
    pub fn is_full(&self, g: &NominalGraph, m: usize) -> bool {
        g.edges().all(|(i, j)| self.len(i, j) >= m)
    }

    fn latest(&self, i: usize, j: usize, m: usize) -> Vec<bool> {
        let buf = &self.samples[i * self.k + j];
        buf.iter().skip(buf.len() - m).copied().collect()
    }
}

/// Draws `Q_i`: run up to `M` trials, each picking an expert `d_u ~ pi` and,
/// if `d_u` is an in-neighbor of `i`, reading position `u` of a fresh random
/// permutation of the `M` buffered samples of edge `(d_u, i)`. Returns the
/// first successful trial, or `M` if none succeeds.
pub fn geometric_resample<R: Rng + ?Sized>(
    i: usize,
    pmf: &Pmf,
    g: &NominalGraph,
    buffers: &ResampleBuffer,
    m: usize,
    rng: &mut R,
) -> Result<usize> {
    let k = g.num_experts();
    if i >= k {
        return Err(Error::IndexOutOfRange { index: i, k });
    }
    if m == 0 {
        return Err(Error::arg("M must be at least 1"));
    }
    if let Some(j) = g.in_iter(i).find(|&j| buffers.len(j, i) < m) {
        return Err(Error::PhaseOrder(format!(
            "edge ({}, {}) holds {} samples, fewer than M = {m}",
            j + 1,
            i + 1,
            buffers.len(j, i)
        )));
    }
    // Positions of one permutation are drawn lazily, without replacement.
    let mut pools: Vec<Option<Vec<bool>>> = vec![None; k];
    for u in 1..=m {
        let d = pmf.sample(rng);
        if !g.has_edge(d, i) {
            continue;
        }
        let pool = pools[d].get_or_insert_with(|| buffers.latest(d, i, m));
        let y = pool.swap_remove(rng.gen_range(0..pool.len()));
        if y {
            return Ok(u);
        }
    }
    Ok(m)
}

/// `Q * loss` when observed, zero otherwise.
pub fn gr_loss_estimate(loss: f64, q: usize, m: usize, observed: bool) -> Result<f64> {
    if q == 0 || q > m {
        return Err(Error::Contract(format!("resampled count {q} outside 1..={m}")));
    }
    Ok(if observed { q as f64 * loss } else { 0.0 })
}

// ---------------------------------------------------------------------------
// Learner

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum PendingKind {
    Exploration,
    Weighted {
        pmf: Pmf,
        eta: f64,
        /// Observation probabilities, for the algorithms that know them.
        q: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Pending {
    round: u64,
    chosen: usize,
    kind: PendingKind,
}

/// One of the five learners, with all of its state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Learner {
    config: LearnerConfig,
    k: usize,
    weights: WeightVector,
    rng: StreamRng,
    round: u64,
    pending: Option<Pending>,
    /// Graph the cached dominating set belongs to.
    graph: Option<NominalGraph>,
    dominating: VertexSet,
    estimator: Option<ProbabilityEstimatorState>,
    buffers: Option<ResampleBuffer>,
    m: usize,
    xi: f64,
    explored: Vec<usize>,
    explore_cursor: usize,
    doubling: DoublingState,
    doubling_eta: f64,
    restarts: u32,
}

const SNAPSHOT_FORMAT: &str = "graphbandit-learner";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    learner: Learner,
}

impl Learner {
    pub fn new(config: LearnerConfig, k: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if k == 0 {
            return Err(Error::arg("K must be at least 1"));
        }
        let doubling = match config.algorithm {
            Algorithm::Exp3Up => DoublingState::starting_at(up_start_epoch(k)),
            _ => DoublingState::starting_at(0),
        };
        let doubling_eta = ip_eta(0, (k as f64).ln()).min(1.0);
        Ok(Learner {
            config,
            k,
            weights: WeightVector::uniform(k),
            rng: rng::stream(seed, Stream::Learner),
            round: 0,
            pending: None,
            graph: None,
            dominating: VertexSet::default(),
            estimator: (config.algorithm == Algorithm::Exp3Up).then(|| ProbabilityEstimatorState::new(k)),
            buffers: (config.algorithm == Algorithm::Exp3Gr).then(|| ResampleBuffer::new(k, config.m)),
            m: config.m,
            xi: config.xi,
            explored: vec![0; k],
            explore_cursor: 0,
            doubling,
            doubling_eta,
            restarts: 0,
        })
    }

    pub fn config(&self) -> &LearnerConfig {
        &self.config
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config.algorithm
    }

    pub fn num_experts(&self) -> usize {
        self.k
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    /// Last round passed to `select`.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn doubling_state(&self) -> DoublingState {
        self.doubling
    }

    pub fn restarts(&self) -> u32 {
        self.restarts
    }

    pub fn dominating_set(&self) -> &VertexSet {
        &self.dominating
    }

    pub fn estimator(&self) -> Option<&ProbabilityEstimatorState> {
        self.estimator.as_ref()
    }

    pub fn buffers(&self) -> Option<&ResampleBuffer> {
        self.buffers.as_ref()
    }

    /// Number of deterministic exploration picks made per expert.
    pub fn explored(&self) -> &[usize] {
        &self.explored
    }

    /// PMF used for the pending selection, if the round was not an
    /// exploration round.
    pub fn pending_pmf(&self) -> Option<&Pmf> {
        match &self.pending {
            Some(Pending {
                kind: PendingKind::Weighted { pmf, .. },
                ..
            }) => Some(pmf),
            _ => None,
        }
    }

    /// Exploration rounds still owed before PMF-based selection resumes.
    pub fn pending_exploration_rounds(&self) -> usize {
        if !self.config.algorithm.has_exploration_phase() {
            return 0;
        }
        self.explored.iter().map(|&e| self.m.saturating_sub(e)).sum()
    }

    fn eta_for(&self, t: u64) -> f64 {
        match self.config.schedule {
            Schedule::Fixed(eta) => eta,
            Schedule::InverseSqrt => inverse_sqrt_eta(t),
            Schedule::Doubling => self.doubling_eta,
        }
    }

    /// Starts a new doubling epoch: weights back to uniform, new parameters,
    /// and (for UP/GR) exploration until every expert has been explored
    /// `params.m` times. Sample counters and buffers are kept.
    pub fn restart_epoch(&mut self, params: EpochParams) {
        self.weights = WeightVector::uniform(self.k);
        self.doubling_eta = params.eta.min(1.0);
        if self.config.algorithm.has_exploration_phase() {
            self.m = params.m.max(1);
            if let Some(xi) = params.xi {
                self.xi = xi;
            }
            if let Some(b) = self.buffers.as_mut() {
                b.set_capacity(self.m);
            }
        }
        self.restarts += 1;
    }

    fn epoch_params(&self, b: u32) -> Result<EpochParams> {
        match self.config.algorithm {
            Algorithm::Exp3Up => up_doubling_params(b, self.k),
            Algorithm::Exp3Gr => gr_doubling_params(
                b,
                self.k,
                self.dominating.len(),
                self.config.epsilon.expect("validated at construction"),
            ),
            _ => unreachable!("IP-style doubling has no epoch table"),
        }
    }

    fn bind_graph(&mut self, g: &NominalGraph) -> Result<()> {
        if g.num_experts() != self.k {
            return Err(Error::Protocol(format!(
                "graph has K = {}, learner was built for K = {}",
                g.num_experts(),
                self.k
            )));
        }
        match &self.graph {
            Some(current) if current == g => return Ok(()),
            Some(_) if self.config.algorithm.requires_static_graph() => {
                return Err(Error::Protocol(format!(
                    "{} requires a static feedback graph",
                    self.config.algorithm
                )))
            }
            _ => {}
        }
        let first = self.graph.is_none();
        self.graph = Some(g.clone());
        self.dominating = match self.config.algorithm {
            Algorithm::Exp3 => VertexSet::new((0..self.k).collect(), self.k)?,
            _ => greedy_dominating_set(g),
        };
        if first && self.config.algorithm.has_exploration_phase() && self.config.schedule == Schedule::Doubling {
            let params = self.epoch_params(self.doubling.epoch)?;
            self.doubling_eta = params.eta.min(1.0);
            self.m = params.m.max(1);
            if let Some(xi) = params.xi {
                self.xi = xi;
            }
            if let Some(b) = self.buffers.as_mut() {
                b.set_capacity(self.m);
            }
        }
        Ok(())
    }

    fn next_exploration_expert(&mut self) -> Option<usize> {
        (0..self.k)
            .map(|off| (self.explore_cursor + off) % self.k)
            .find(|&i| self.explored[i] < self.m)
            .inspect(|&i| self.explore_cursor = (i + 1) % self.k)
    }

    /// Applies last round's feedback (if any), then selects for round `t`.
    pub fn step(&mut self, ctx: &RoundContext<'_>, feedback: Option<&Observation<'_>>) -> Result<usize> {
        if let Some(obs) = feedback {
            self.update(obs)?;
        }
        self.select(ctx)
    }

    /// Serializes the learner between rounds as versioned JSON.
    pub fn snapshot(&self) -> Result<String> {
        if self.pending.is_some() {
            return Err(Error::Protocol("cannot snapshot between select and update".into()));
        }
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            learner: self.clone(),
        };
        serde_json::to_string(&snap).map_err(|e| Error::Snapshot(e.to_string()))
    }

    pub fn restore(text: &str) -> Result<Self> {
        let snap: Snapshot = serde_json::from_str(text).map_err(|e| Error::Snapshot(e.to_string()))?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(Error::Snapshot(format!("unexpected format tag `{}`", snap.format)));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported snapshot version {}", snap.version)));
        }
        Ok(snap.learner)
    }

    fn select_inner(&mut self, ctx: &RoundContext<'_>) -> Result<Pending> {
        let t = ctx.t;
        let algorithm = self.config.algorithm;

        if algorithm.has_exploration_phase() {
            if self.config.schedule == Schedule::Doubling {
                let b = epoch_for_round(t, self.doubling.epoch);
                if b != self.doubling.epoch {
                    self.doubling.epoch = b;
                    let params = self.epoch_params(b)?;
                    self.restart_epoch(params);
                }
            }
            if let Some(chosen) = self.next_exploration_expert() {
                return Ok(Pending {
                    round: t,
                    chosen,
                    kind: PendingKind::Exploration,
                });
            }
        }

        let eta = self.eta_for(t).min(1.0);
        let (pmf, q) = match algorithm {
            Algorithm::Exp3 => {
                let pmf = mixed_pmf(&self.weights, eta, &vec![1.0 / self.k as f64; self.k])?;
                let q = pmf.probs().to_vec();
                (pmf, Some(q))
            }
            Algorithm::Exp3Ip | Algorithm::Exp3Dom => {
                let graph = ctx.graph;
                let unit;
                let probs = if algorithm == Algorithm::Exp3Ip {
                    ctx.probabilities.ok_or_else(|| {
                        Error::arg("exp3-ip needs the edge probabilities (informative setting)")
                    })?
                } else {
                    unit = EdgeProbabilityTable::unit(graph);
                    &unit
                };
                let pmf = exp3ip_pmf(&self.weights, eta, graph, probs, &self.dominating)?;
                let q = (0..self.k)
                    .map(|i| exp3ip_observation_prob(&pmf, graph, probs, i))
                    .collect::<Result<Vec<_>>>()?;
                (pmf, Some(q))
            }
            Algorithm::Exp3Up | Algorithm::Exp3Gr => (exp3up_pmf(&self.weights, eta, &self.dominating)?, None),
        };
        let chosen = pmf.sample(&mut self.rng);
        Ok(Pending {
            round: t,
            chosen,
            kind: PendingKind::Weighted { pmf, eta, q },
        })
    }
}

impl Policy for Learner {
    fn select(&mut self, ctx: &RoundContext<'_>) -> Result<usize> {
        if self.pending.is_some() {
            return Err(Error::Protocol(format!(
                "select for round {} before the update of round {}",
                ctx.t, self.round
            )));
        }
        if ctx.t != self.round + 1 {
            return Err(Error::Protocol(format!(
                "expected round {}, got round {}",
                self.round + 1,
                ctx.t
            )));
        }
        self.bind_graph(ctx.graph)?;
        let pending = self.select_inner(ctx)?;
        let chosen = pending.chosen;
        self.round = ctx.t;
        self.pending = Some(pending);
        Ok(chosen)
    }

    fn update(&mut self, obs: &Observation<'_>) -> Result<()> {
        let pending = match &self.pending {
            Some(p) if p.round == obs.round && p.chosen == obs.chosen => self.pending.take().expect("checked"),
            Some(p) => {
                return Err(Error::Protocol(format!(
                    "feedback for round {} / expert {} does not match selection of expert {} in round {}",
                    obs.round,
                    obs.chosen + 1,
                    p.chosen + 1,
                    p.round
                )))
            }
            None => return Err(Error::Protocol("update without a pending selection".into())),
        };
        let graph = self.graph.as_ref().expect("bound during select");
        let chosen = pending.chosen;

        let mut revealed: Vec<Option<f64>> = vec![None; self.k];
        for &(j, loss) in obs.observed {
            if j >= self.k || !graph.has_edge(chosen, j) {
                return Err(Error::Contract(format!(
                    "loss of expert {} revealed but ({}, {}) is not an edge",
                    j + 1,
                    chosen + 1,
                    j + 1
                )));
            }
            if !(0.0..=1.0).contains(&loss) {
                return Err(Error::Contract(format!("revealed loss {loss} outside [0, 1]")));
            }
            if revealed[j].replace(loss).is_some() {
                return Err(Error::Contract(format!("loss of expert {} revealed twice", j + 1)));
            }
        }

        let mut estimates = vec![0.0; self.k];
        let weighted = match &pending.kind {
            PendingKind::Exploration => {
                self.explored[chosen] += 1;
                None
            }
            PendingKind::Weighted { pmf, eta, q } => {
                match self.config.algorithm {
                    Algorithm::Exp3 => {
                        let q = q.as_ref().expect("exp3 records q");
                        if let Some(loss) = revealed[chosen] {
                            estimates[chosen] = importance_loss_estimate(loss, q[chosen], true)?;
                        }
                    }
                    Algorithm::Exp3Ip | Algorithm::Exp3Dom => {
                        let q = q.as_ref().expect("IP-style learners record q");
                        for i in 0..self.k {
                            estimates[i] = importance_loss_estimate(revealed[i].unwrap_or(0.0), q[i], revealed[i].is_some())?;
                        }
                    }
                    Algorithm::Exp3Up => {
                        let est = self.estimator.as_ref().expect("UP keeps an estimator");
                        for i in 0..self.k {
                            if let Some(loss) = revealed[i] {
                                let qhat = exp3up_qhat(pmf, graph, est, self.xi, self.m, i)?;
                                estimates[i] = exp3up_loss_estimate(loss, qhat, true)?;
                            }
                        }
                    }
                    Algorithm::Exp3Gr => {
                        let buffers = self.buffers.as_ref().expect("GR keeps buffers");
                        for i in 0..self.k {
                            if let Some(loss) = revealed[i] {
                                let q = geometric_resample(i, pmf, graph, buffers, self.m, &mut self.rng)?;
                                estimates[i] = gr_loss_estimate(loss, q, self.m, true)?;
                            }
                        }
                    }
                }
                Some((pmf, *eta, q))
            }
        };

        // Activation samples from this round only enter estimates of later rounds.
        if let Some(est) = self.estimator.as_mut() {
            let realized: Vec<(usize, bool)> = graph.out_iter(chosen).map(|j| (j, revealed[j].is_some())).collect();
            est.update(chosen, graph, &realized)?;
        }
        if let Some(buffers) = self.buffers.as_mut() {
            for j in graph.out_iter(chosen) {
                buffers.push(chosen, j, revealed[j].is_some());
            }
        }

        if let Some((pmf, eta, q)) = weighted {
            self.weights = exp_weight_update(&self.weights, eta, &estimates)?;
            if self.config.schedule == Schedule::Doubling && !self.config.algorithm.has_exploration_phase() {
                let q = q.as_ref().expect("IP-style learners record q");
                let step = ip_doubling_step(self.doubling, pmf, q, (self.k as f64).ln())?;
                self.doubling = step.state;
                if step.restart {
                    self.restart_epoch(EpochParams {
                        eta: step.eta,
                        m: self.m,
                        xi: None,
                    });
                }
            }
        }
        Ok(())
    }

    fn name(&self) -> String {
        self.config.algorithm.name().to_string()
    }

    fn requires_static_graph(&self) -> bool {
        self.config.algorithm.requires_static_graph()
    }
}

/// Always picks the same expert.
#[derive(Debug, Clone)]
pub struct FixedChoice {
    pub expert: usize,
}

impl Policy for FixedChoice {
    fn select(&mut self, ctx: &RoundContext<'_>) -> Result<usize> {
        if self.expert >= ctx.graph.num_experts() {
            return Err(Error::IndexOutOfRange {
                index: self.expert,
                k: ctx.graph.num_experts(),
            });
        }
        Ok(self.expert)
    }

    fn update(&mut self, _obs: &Observation<'_>) -> Result<()> {
        Ok(())
    }

    fn name(&self) -> String {
        format!("fixed-{}", self.expert + 1)
    }
}

/// Picks uniformly at random every round.
#[derive(Debug, Clone)]
pub struct UniformChoice {
    rng: StreamRng,
}

impl UniformChoice {
    pub fn new(seed: u64) -> Self {
        UniformChoice {
            rng: rng::stream(seed, Stream::Learner),
        }
    }
}

impl Policy for UniformChoice {
    fn select(&mut self, ctx: &RoundContext<'_>) -> Result<usize> {
        Ok(self.rng.gen_range(0..ctx.graph.num_experts()))
    }

    fn update(&mut self, _obs: &Observation<'_>) -> Result<()> {
        Ok(())
    }

    fn name(&self) -> String {
        "uniform".into()
    }
}
