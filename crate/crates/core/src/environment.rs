//! The simulated world: an oblivious adversary choosing losses, Bernoulli
//! edge activations deciding what the learner sees, and the bookkeeping
//! needed for regret.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::experts::PredictionTable;
use crate::graph::{EdgeProbabilityTable, NominalGraph};
use crate::policies::{Observation, Policy, RoundContext};
use crate::rng::{self, Stream, StreamRng};

/// How the adversary picks the loss vector of each round. Every variant is
/// oblivious: losses depend on the round and the loss stream only.
#[derive(Debug, Clone)]
pub enum AdversarySpec {
    /// Explicit `T x K` table; round `t` reads row `t - 1`.
    FixedTable { losses: Vec<Vec<f64>> },
    /// Bernoulli losses. Expert `best` has mean `base - gap`, the others `base`.
    StochasticGap { k: usize, best: usize, base: f64, gap: f64 },
    /// Like `StochasticGap`, but the best expert moves to the next index
    /// every `period` rounds.
    Switching { k: usize, base: f64, gap: f64, period: u64 },
    /// Losses of a trained expert pool on consecutive dataset rows.
    Dataset(Arc<PredictionTable>),
}

impl AdversarySpec {
    pub fn fixed_table(losses: Vec<Vec<f64>>) -> Result<Self> {
        let k = losses.first().map_or(0, Vec::len);
        if k == 0 {
            return Err(Error::arg("loss table is empty"));
        }
        for (t, row) in losses.iter().enumerate() {
            if row.len() != k {
                return Err(Error::arg(format!("loss table row {} has {} entries, expected {k}", t + 1, row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::arg(format!("loss {v} in row {} outside [0, 1]", t + 1)));
            }
        }
        Ok(AdversarySpec::FixedTable { losses })
    }

    /// Reads a `T x K` loss table. A first row that does not parse as numbers
    /// is treated as a header.
    pub fn fixed_table_from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_path(path.as_ref())?;
        let mut losses = Vec::new();
        for (n, record) in reader.records().enumerate() {
            let record = record?;
            let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(row) => losses.push(row),
                Err(_) if n == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse {
                        line: n + 1,
                        message: format!("non-numeric loss: {e}"),
                    })
                }
            }
        }
        AdversarySpec::fixed_table(losses)
    }

    pub fn stochastic_gap(k: usize, best: usize, base: f64, gap: f64) -> Result<Self> {
        check_gap(k, base, gap)?;
        if best >= k {
            return Err(Error::IndexOutOfRange { index: best, k });
        }
        Ok(AdversarySpec::StochasticGap { k, best, base, gap })
    }

    pub fn switching(k: usize, base: f64, gap: f64, period: u64) -> Result<Self> {
        check_gap(k, base, gap)?;
        if period == 0 {
            return Err(Error::arg("switching period must be at least 1"));
        }
        Ok(AdversarySpec::Switching { k, base, gap, period })
    }

    pub fn num_experts(&self) -> usize {
        match self {
            AdversarySpec::FixedTable { losses } => losses[0].len(),
            AdversarySpec::StochasticGap { k, .. } | AdversarySpec::Switching { k, .. } => *k,
            AdversarySpec::Dataset(table) => table.num_experts(),
        }
    }

    /// Longest horizon the adversary can serve, if bounded.
    pub fn max_horizon(&self) -> Option<u64> {
        match self {
            AdversarySpec::FixedTable { losses } => Some(losses.len() as u64),
            AdversarySpec::Dataset(table) => Some(table.num_rows() as u64),
            _ => None,
        }
    }

    /// Loss vector of round `t` (1-based).
    pub fn losses<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> Vec<f64> {
        let bernoulli = |k: usize, best: usize, base: f64, gap: f64, rng: &mut R| {
            (0..k)
                .map(|i| {
                    let mean = if i == best { base - gap } else { base };
                    if rng.gen::<f64>() < mean {
                        1.0
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        match self {
            AdversarySpec::FixedTable { losses } => losses[(t - 1) as usize].clone(),
            AdversarySpec::StochasticGap { k, best, base, gap } => bernoulli(*k, *best, *base, *gap, rng),
            AdversarySpec::Switching { k, base, gap, period } => {
                let best = (((t - 1) / period) % *k as u64) as usize;
                bernoulli(*k, best, *base, *gap, rng)
            }
            AdversarySpec::Dataset(table) => table.losses((t - 1) as usize).to_vec(),
        }
    }
}

fn check_gap(k: usize, base: f64, gap: f64) -> Result<()> {
    if k == 0 {
        return Err(Error::arg("K must be at least 1"));
    }
    if !(0.0..=1.0).contains(&base) || !(0.0..=base).contains(&gap) {
        return Err(Error::arg(format!("means base = {base}, base - gap = {} must lie in [0, 1]", base - gap)));
    }
    Ok(())
}

/// Graph and edge probabilities per round.
#[derive(Debug, Clone)]
pub enum GraphSource {
    Static(NominalGraph, EdgeProbabilityTable),
    /// Round `t` uses entry `(t - 1) mod len`.
    Cycle(Vec<(NominalGraph, EdgeProbabilityTable)>),
}

impl GraphSource {
    pub fn fixed(g: NominalGraph, p: EdgeProbabilityTable) -> Result<Self> {
        p.check_consistent(&g)?;
        Ok(GraphSource::Static(g, p))
    }

    pub fn cycle(entries: Vec<(NominalGraph, EdgeProbabilityTable)>) -> Result<Self> {
        let k = match entries.first() {
            Some((g, _)) => g.num_experts(),
            None => return Err(Error::arg("graph sequence is empty")),
        };
        for (g, p) in &entries {
            if g.num_experts() != k {
                return Err(Error::arg("all graphs in a sequence must have the same K"));
            }
            p.check_consistent(g)?;
        }
        Ok(GraphSource::Cycle(entries))
    }

    pub fn num_experts(&self) -> usize {
        self.at(1).0.num_experts()
    }

    pub fn is_static(&self) -> bool {
        match self {
            GraphSource::Static(..) => true,
            GraphSource::Cycle(entries) => entries.windows(2).all(|w| w[0].0 == w[1].0),
        }
    }

    pub fn at(&self, t: u64) -> (&NominalGraph, &EdgeProbabilityTable) {
        match self {
            GraphSource::Static(g, p) => (g, p),
            GraphSource::Cycle(entries) => {
                let (g, p) = &entries[((t - 1) % entries.len() as u64) as usize];
                (g, p)
            }
        }
    }
}

/// Everything that happened in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEvent {
    pub round: u64,
    pub chosen: usize,
    /// Revealed `(expert, loss)` pairs in increasing expert order.
    pub observed: Vec<(usize, f64)>,
    /// Loss of the chosen expert, whether or not it was revealed.
    pub incurred_loss: f64,
}

impl FeedbackEvent {
    /// The learner's view of the round.
    pub fn observation(&self) -> Observation<'_> {
        Observation {
            round: self.round,
            chosen: self.chosen,
            observed: &self.observed,
        }
    }

    pub fn self_observed(&self) -> bool {
        self.observed.iter().any(|&(j, _)| j == self.chosen)
    }
}

/// Fires every out-edge of `chosen` independently with its probability and
/// reveals the losses at the heads of the fired edges.
pub fn realize_feedback<R: Rng + ?Sized>(
    round: u64,
    g: &NominalGraph,
    p: &EdgeProbabilityTable,
    chosen: usize,
    losses: &[f64],
    rng: &mut R,
) -> Result<FeedbackEvent> {
    let k = g.num_experts();
    if chosen >= k {
        return Err(Error::IndexOutOfRange { index: chosen, k });
    }
    if losses.len() != k {
        return Err(Error::Contract(format!("{} losses for K = {k}", losses.len())));
    }
    if let Some(v) = losses.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("loss {v} outside [0, 1]")));
    }
    let observed = g
        .out_iter(chosen)
        .filter(|&j| rng.gen::<f64>() < p.get(chosen, j))
        .map(|j| (j, losses[j]))
        .collect();
    Ok(FeedbackEvent {
        round,
        chosen,
        observed,
        incurred_loss: losses[chosen],
    })
}

/// Record of a finished (or partial) episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub seed: u64,
    pub chosen: Vec<usize>,
    pub incurred: Vec<f64>,
    /// Cumulative loss of every fixed expert.
    pub expert_totals: Vec<f64>,
    /// `min_i` of the cumulative expert losses after each round.
    pub best_cumulative: Vec<f64>,
    /// Whether the chosen expert's own loss was revealed.
    pub self_observed: Vec<bool>,
    /// Digest of the loss sequence, for checking common random numbers.
    pub loss_digest: u64,
    /// Dataset mode: prediction of the chosen expert and the true target.
    pub predictions: Vec<f64>,
    pub truths: Vec<f64>,
}

impl RunTrace {
    fn new(seed: u64, k: usize) -> Self {
        RunTrace {
            seed,
            chosen: Vec::new(),
            incurred: Vec::new(),
            expert_totals: vec![0.0; k],
            best_cumulative: Vec::new(),
            self_observed: Vec::new(),
            loss_digest: 0,
            predictions: Vec::new(),
            truths: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.chosen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chosen.is_empty()
    }

    /// Cumulative regret after each round.
    pub fn regret_curve(&self) -> Vec<f64> {
        let mut total = 0.0;
        self.incurred
            .iter()
            .zip(&self.best_cumulative)
            .map(|(l, best)| {
                total += l;
                total - best
            })
            .collect()
    }

    /// Squared prediction error of each round (dataset mode).
    pub fn squared_errors(&self) -> Vec<f64> {
        self.predictions
            .iter()
            .zip(&self.truths)
            .map(|(y_hat, y)| (y_hat - y) * (y_hat - y))
            .collect()
    }
}

/// `sum_t incurred - min_i sum_t loss_t(i)`.
pub fn empirical_regret(trace: &RunTrace) -> f64 {
    let best = trace.expert_totals.iter().copied().fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return 0.0;
    }
    trace.incurred.iter().sum::<f64>() - best
}

/// A steppable episode. Cloning it (with a `Clone` policy) forks the world
/// and the learner at the current round.
#[derive(Debug, Clone)]
pub struct Episode<P> {
    policy: P,
    adversary: AdversarySpec,
    graphs: GraphSource,
    informative: bool,
    horizon: u64,
    t: u64,
    loss_rng: StreamRng,
    feedback_rng: StreamRng,
    digest: DefaultHasher,
    trace: RunTrace,
}

impl<P: Policy> Episode<P> {
    pub fn new(
        policy: P,
        adversary: AdversarySpec,
        graphs: GraphSource,
        informative: bool,
        horizon: u64,
        seed: u64,
    ) -> Result<Self> {
        let k = graphs.num_experts();
        if adversary.num_experts() != k {
            return Err(Error::arg(format!(
                "adversary has K = {}, graph has K = {k}",
                adversary.num_experts()
            )));
        }
        if let Some(max) = adversary.max_horizon() {
            if horizon > max {
                return Err(Error::arg(format!("horizon {horizon} exceeds the {max} rounds the adversary provides")));
            }
        }
        if policy.requires_static_graph() && !graphs.is_static() {
            return Err(Error::arg(format!("{} requires a static feedback graph", policy.name())));
        }
        Ok(Episode {
            policy,
            adversary,
            graphs,
            informative,
            horizon,
            t: 0,
            loss_rng: rng::stream(seed, Stream::Losses),
            feedback_rng: rng::stream(seed, Stream::Feedback),
            digest: DefaultHasher::new(),
            trace: RunTrace::new(seed, k),
        })
    }

    pub fn round(&self) -> u64 {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.horizon
    }

    pub fn policy(&self) -> &P {
        &self.policy
    }

    /// Swaps in another learner, e.g. one restored from a snapshot.
    pub fn replace_policy(&mut self, policy: P) -> P {
        std::mem::replace(&mut self.policy, policy)
    }

    pub fn trace(&self) -> &RunTrace {
        &self.trace
    }

    /// Plays one round.
    pub fn step(&mut self) -> Result<FeedbackEvent> {
        if self.is_done() {
            return Err(Error::Protocol(format!("episode already ran its {} rounds", self.horizon)));
        }
        let t = self.t + 1;
        let losses = self.adversary.losses(t, &mut self.loss_rng);
        let (g, p) = self.graphs.at(t);
        let ctx = RoundContext {
            t,
            graph: g,
            probabilities: self.informative.then_some(p),
        };
        let chosen = self.policy.select(&ctx)?;
        let event = realize_feedback(t, g, p, chosen, &losses, &mut self.feedback_rng)?;
        self.policy.update(&event.observation())?;

        for v in &losses {
            self.digest.write_u64(v.to_bits());
        }
        let trace = &mut self.trace;
        trace.loss_digest = self.digest.finish();
        trace.chosen.push(chosen);
        trace.incurred.push(event.incurred_loss);
        trace.self_observed.push(event.self_observed());
        for (total, l) in trace.expert_totals.iter_mut().zip(&losses) {
            *total += l;
        }
        trace
            .best_cumulative
            .push(trace.expert_totals.iter().copied().fold(f64::INFINITY, f64::min));
        if let AdversarySpec::Dataset(table) = &self.adversary {
            let row = (t - 1) as usize;
            trace.predictions.push(table.prediction(row, chosen));
            trace.truths.push(table.truth(row));
        }
        self.t = t;
        Ok(event)
    }

    pub fn run_to_end(mut self) -> Result<RunTrace> {
        while !self.is_done() {
            self.step()?;
        }
        Ok(self.trace)
    }
}

/// Runs `policy` for `horizon` rounds. The environment uses its own random
/// streams derived from `seed`, so the loss sequence does not depend on the
/// learner.
pub fn run_episode<P: Policy>(
    policy: P,
    adversary: &AdversarySpec,
    graphs: &GraphSource,
    informative: bool,
    horizon: u64,
    seed: u64,
) -> Result<RunTrace> {
    Episode::new(policy, adversary.clone(), graphs.clone(), informative, horizon, seed)?.run_to_end()
}
