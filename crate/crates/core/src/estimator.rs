//! Numerical kernels shared by every learner: exponential weights kept in the
//! log domain, importance-weighted loss estimates, and PMF sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on `sum(pmf) - 1`.
pub const PMF_TOLERANCE: f64 = 1e-9;

/// Strictly positive expert weights.
///
/// Stored as log-weights relative to the largest one (so the maximum entry is
/// exactly zero) plus a separate log-scale. Normalized weights only read the
/// relative part, which keeps `w / W` finite over long horizons and makes it
/// independent of any common rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    log_rel: Vec<f64>,
    log_scale: f64,
}

impl WeightVector {
    /// All weights equal to one.
    pub fn uniform(k: usize) -> Self {
        WeightVector {
            log_rel: vec![0.0; k],
            log_scale: 0.0,
        }
    }

    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Numeric(format!("weight {w} is not finite and positive")));
        }
        Self::from_log_weights(weights.iter().map(|w| w.ln()).collect())
    }

    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::arg("weight vector must be non-empty"));
        }
        if log_weights.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("log-weight is not finite".into()));
        }
        let mut v = WeightVector {
            log_rel: log_weights,
            log_scale: 0.0,
        };
        v.recenter();
        Ok(v)
    }

    fn recenter(&mut self) {
        let max = self.log_rel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max != 0.0 {
            for l in &mut self.log_rel {
                *l -= max;
            }
            self.log_scale += max;
        }
    }

    pub fn len(&self) -> usize {
        self.log_rel.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_rel.is_empty()
    }

    /// Absolute log-weights `ln w_i`.
    pub fn log_weights(&self) -> Vec<f64> {
        self.log_rel.iter().map(|l| l + self.log_scale).collect()
    }

    /// `w_i / W`, computed with a max-shifted sum of exponentials.
    pub fn normalized(&self) -> Vec<f64> {
        let exps: Vec<f64> = self.log_rel.iter().map(|l| l.exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Numeric(format!("scale factor {factor} is not finite and positive")));
        }
        Ok(WeightVector {
            log_rel: self.log_rel.clone(),
            log_scale: self.log_scale + factor.ln(),
        })
    }
}

/// `w'_i = w_i * exp(-eta * estimate_i)`.
pub fn exp_weight_update(w: &WeightVector, eta: f64, loss_estimates: &[f64]) -> Result<WeightVector> {
    if loss_estimates.len() != w.len() {
        return Err(Error::arg(format!(
            "{} loss estimates for {} weights",
            loss_estimates.len(),
            w.len()
        )));
    }
    if !(eta.is_finite() && eta >= 0.0) {
        return Err(Error::Numeric(format!("learning rate {eta} is not finite and non-negative")));
    }
    if let Some(e) = loss_estimates.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(Error::Numeric(format!("loss estimate {e} is not finite and non-negative")));
    }
    let mut next = WeightVector {
        log_rel: w
            .log_rel
            .iter()
            .zip(loss_estimates)
            .map(|(l, e)| l - eta * e)
            .collect(),
        log_scale: w.log_scale,
    };
    next.recenter();
    Ok(next)
}

/// `loss / q` when observed, zero otherwise.
pub fn importance_loss_estimate(loss: f64, q: f64, observed: bool) -> Result<f64> {
    if !observed {
        return Ok(0.0);
    }
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvariantViolation(format!(
            "observation probability {q} is not positive; the PMF or edge probabilities are inconsistent"
        )));
    }
    Ok(loss / q)
}

/// Probability mass function over experts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    probs: Vec<f64>,
}

impl Pmf {
    /// Validates entries are non-negative and sum to one within
    /// [`PMF_TOLERANCE`]; small drift is renormalized away.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::arg("PMF must be non-empty"));
        }
        if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvariantViolation(format!("PMF entry {p} is negative or not finite")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_TOLERANCE {
            return Err(Error::InvariantViolation(format!("PMF sums to {total}")));
        }
        if total != 1.0 {
            for p in &mut probs {
                *p /= total;
            }
        }
        Ok(Pmf { probs })
    }

    pub fn uniform(k: usize) -> Self {
        Pmf {
            probs: vec![1.0 / k as f64; k],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.probs[i]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.probs, rng).expect("a valid PMF has positive mass")
    }
}

/// `(1 - eta) * w / W + eta * exploration`, where `exploration` is itself a
/// distribution over experts.
pub fn mixed_pmf(w: &WeightVector, eta: f64, exploration: &[f64]) -> Result<Pmf> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::arg(format!("learning rate {eta} outside [0, 1]")));
    }
    if exploration.len() != w.len() {
        return Err(Error::arg("exploration distribution has the wrong length"));
    }
    let exploit = w.normalized();
    Pmf::new(
        exploit
            .iter()
            .zip(exploration)
            .map(|(x, e)| (1.0 - eta) * x + eta * e)
            .collect(),
    )
}

/// Inverse-CDF draw over indices in ascending order; consumes one uniform.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    let last_positive = probs
        .iter()
        .rposition(|&p| p > 0.0)
        .ok_or_else(|| Error::InvariantViolation("cannot sample from an all-zero PMF".into()))?;
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative && p > 0.0 {
            return Ok(i);
        }
    }
    Ok(last_positive)
}
