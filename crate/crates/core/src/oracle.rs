//! Monte Carlo drivers for the estimator identities. Each function runs the
//! real select/observe/estimate code many times and reports sample means with
//! their standard errors; callers compare them against closed forms.

use rand::Rng;

use crate::environment::{realize_feedback, run_episode, AdversarySpec, GraphSource};
use crate::error::{Error, Result};
use crate::estimator::{importance_loss_estimate, Pmf, WeightVector};
use crate::graph::{greedy_dominating_set, EdgeProbabilityTable, NominalGraph};
use crate::policies::{
    exp3ip_observation_prob, exp3ip_pmf, geometric_resample, gr_loss_estimate, Algorithm, Learner, LearnerConfig,
    ResampleBuffer,
};
use crate::rng::{self, Stream};

/// Running first and second moments.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: u64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        (self.sum_sq / self.n as f64 - m * m).max(0.0) * self.n as f64 / (self.n as f64 - 1.0).max(1.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    /// Distance to `target` in standard errors.
    pub fn z_score(&self, target: f64) -> f64 {
        let se = self.std_error();
        if se == 0.0 {
            if self.mean() == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean() - target).abs() / se
        }
    }
}

/// Per-expert moments of the Exp3-IP estimate and its square.
#[derive(Debug, Clone)]
pub struct IpOracle {
    pub pmf: Pmf,
    pub q: Vec<f64>,
    pub estimate: Vec<Moments>,
    pub estimate_sq: Vec<Moments>,
}

/// Fixes `pi` from the Exp3-IP PMF and simulates `rounds` rounds of
/// select, observe and estimate with constant losses.
pub fn ip_estimator(
    g: &NominalGraph,
    p: &EdgeProbabilityTable,
    weights: &WeightVector,
    eta: f64,
    losses: &[f64],
    rounds: u64,
    seed: u64,
) -> Result<IpOracle> {
    let k = g.num_experts();
    if losses.len() != k {
        return Err(Error::arg("one loss per expert is required"));
    }
    let pmf = exp3ip_pmf(weights, eta, g, p, &greedy_dominating_set(g))?;
    let q = (0..k)
        .map(|i| exp3ip_observation_prob(&pmf, g, p, i))
        .collect::<Result<Vec<_>>>()?;
    let mut select_rng = rng::stream(seed, Stream::Learner);
    let mut feedback_rng = rng::stream(seed, Stream::Feedback);
    let mut estimate = vec![Moments::default(); k];
    let mut estimate_sq = vec![Moments::default(); k];
    let mut seen = vec![false; k];
    for t in 1..=rounds {
        let chosen = pmf.sample(&mut select_rng);
        let ev = realize_feedback(t, g, p, chosen, losses, &mut feedback_rng)?;
        seen.iter_mut().for_each(|s| *s = false);
        for &(j, _) in &ev.observed {
            seen[j] = true;
        }
        for i in 0..k {
            let e = importance_loss_estimate(losses[i], q[i], seen[i])?;
            estimate[i].push(e);
            estimate_sq[i].push(e * e);
        }
    }
    Ok(IpOracle {
        pmf,
        q,
        estimate,
        estimate_sq,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct GrOracle {
    pub resampled: Moments,
    pub estimate: Moments,
}

/// Geometric resampling for one expert whose observation probability is
/// `q`: a two-expert complete graph with every edge probability `q` and a
/// uniform PMF. Every draw refreshes the buffers with `m` new activation
/// samples per edge.
pub fn gr_resampling(q: f64, m: usize, loss: f64, draws: u64, seed: u64) -> Result<GrOracle> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::arg(format!("q = {q} outside (0, 1]")));
    }
    let g = NominalGraph::complete(2)?;
    let p = EdgeProbabilityTable::equal(&g, q)?;
    let pmf = Pmf::uniform(2);
    let mut buffers = ResampleBuffer::new(2, m);
    let mut learner_rng = rng::stream(seed, Stream::Learner);
    let mut feedback_rng = rng::stream(seed, Stream::Feedback);
    let mut resampled = Moments::default();
    let mut estimate = Moments::default();
    let losses = [loss, loss];
    for t in 1..=draws {
        for j in 0..2 {
            for _ in 0..m {
                buffers.push(j, 0, feedback_rng.gen::<f64>() < q);
            }
        }
        let chosen = pmf.sample(&mut learner_rng);
        let ev = realize_feedback(t, &g, &p, chosen, &losses, &mut feedback_rng)?;
        let observed = ev.observed.iter().any(|&(j, _)| j == 0);
        let qi = geometric_resample(0, &pmf, &g, &buffers, m, &mut learner_rng)?;
        resampled.push(qi as f64);
        estimate.push(gr_loss_estimate(loss, qi, m, observed)?);
    }
    Ok(GrOracle { resampled, estimate })
}

/// Largest `|p_hat - p|` over all edges after Exp3-UP's exploration phase
/// with `m` samples per edge, for each of `replicates` independent runs.
pub fn probability_estimation(
    g: &NominalGraph,
    p: &EdgeProbabilityTable,
    m: usize,
    replicates: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let k = g.num_experts();
    let source = GraphSource::fixed(g.clone(), p.clone())?;
    let adversary = AdversarySpec::fixed_table(vec![vec![0.5; k]; k * m])?;
    (0..replicates)
        .map(|r| {
            let s = seed.wrapping_add(r);
            let cfg = LearnerConfig::new(Algorithm::Exp3Up).with_m(m);
            let mut episode = crate::environment::Episode::new(
                Learner::new(cfg, k, s)?,
                adversary.clone(),
                source.clone(),
                false,
                (k * m) as u64,
                s,
            )?;
            while !episode.is_done() {
                episode.step()?;
            }
            let est = episode.policy().estimator().expect("Exp3-UP keeps estimates");
            Ok(g.edges()
                .map(|(i, j)| (est.estimate(i, j) - p.get(i, j)).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

/// Selection counts over the first `k * m` rounds of an Exp3-UP or Exp3-GR
/// run on the complete graph.
pub fn exploration_counts(algorithm: Algorithm, k: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    let g = NominalGraph::complete(k)?;
    let p = EdgeProbabilityTable::equal(&g, 0.5)?;
    let adversary = AdversarySpec::stochastic_gap(k, 0, 0.5, 0.1)?;
    let learner = Learner::new(LearnerConfig::new(algorithm).with_m(m), k, seed)?;
    let trace = run_episode(learner, &adversary, &GraphSource::fixed(g, p)?, false, (k * m) as u64, seed)?;
    let mut counts = vec![0; k];
    for c in trace.chosen {
        counts[c] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_of_a_known_sample() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
        assert_eq!(m.z_score(2.5), 0.0);
    }

    #[test]
    fn exploration_counts_are_balanced() {
        assert_eq!(exploration_counts(Algorithm::Exp3Gr, 3, 4, 1).unwrap(), vec![4, 4, 4]);
    }
}
