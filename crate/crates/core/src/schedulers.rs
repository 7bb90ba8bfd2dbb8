//! Learning-rate schedules, including the doubling-trick schedules that let
//! each algorithm run without knowing the horizon.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Pmf;

/// How a learner picks its parameters from round to round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// Constant learning rate.
    Fixed(f64),
    /// `eta_t = 1 / sqrt(t)`.
    InverseSqrt,
    /// Epoch-based restarts with per-algorithm parameter formulas.
    Doubling,
}

impl Schedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::Fixed(eta) if !(eta > 0.0 && eta <= 1.0) => {
                Err(Error::arg(format!("fixed learning rate {eta} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let schedule = match s.trim() {
            "inverse-sqrt" => Schedule::InverseSqrt,
            "doubling" => Schedule::Doubling,
            other => {
                let eta = other
                    .strip_prefix("fixed:")
                    .ok_or_else(|| {
                        Error::arg(format!(
                            "unknown schedule `{other}` (expected fixed:<eta>, inverse-sqrt or doubling)"
                        ))
                    })?
                    .parse::<f64>()
                    .map_err(|_| Error::arg(format!("invalid learning rate in `{other}`")))?;
                Schedule::Fixed(eta)
            }
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Fixed(eta) => write!(f, "fixed:{eta}"),
            Schedule::InverseSqrt => f.write_str("inverse-sqrt"),
            Schedule::Doubling => f.write_str("doubling"),
        }
    }
}

/// `1 / sqrt(t)` for 1-based round `t`.
pub fn inverse_sqrt_eta(t: u64) -> f64 {
    1.0 / (t.max(1) as f64).sqrt()
}

/// Epoch bookkeeping for the doubling trick. `epoch` is `r` for Exp3-IP and
/// `b` for Exp3-UP/GR; `accumulated` is only used by Exp3-IP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublingState {
    pub epoch: u32,
    pub accumulated: f64,
}

impl DoublingState {
    pub fn starting_at(epoch: u32) -> Self {
        DoublingState { epoch, accumulated: 0.0 }
    }
}

/// Result of one Exp3-IP doubling update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpDoublingStep {
    pub state: DoublingState,
    pub restart: bool,
    /// Learning rate for the following rounds.
    pub eta: f64,
}

/// `sqrt(ln K / 2^(r+1))`.
pub fn ip_eta(r: u32, ln_k: f64) -> f64 {
    (ln_k / 2f64.powi(r as i32 + 1)).sqrt()
}

/// Adds `Q_t = 1 + (1/2) sum_i pi_i / q_i` to the running total. Once the
/// total exceeds `2^r`, `r` jumps to the smallest value with total `<= 2^r`
/// and a restart is signalled.
pub fn ip_doubling_step(state: DoublingState, pmf: &Pmf, q: &[f64], ln_k: f64) -> Result<IpDoublingStep> {
    if q.len() != pmf.len() {
        return Err(Error::arg("observation probabilities have the wrong length"));
    }
    let mut ratio_sum = 0.0;
    for (i, &qi) in q.iter().enumerate() {
        if !(qi > 0.0) {
            return Err(Error::InvariantViolation(format!(
                "observation probability of expert {} is {qi}",
                i + 1
            )));
        }
        ratio_sum += pmf.get(i) / qi;
    }
    let accumulated = state.accumulated + 1.0 + 0.5 * ratio_sum;
    let mut epoch = state.epoch;
    while accumulated > 2f64.powi(epoch as i32) {
        epoch += 1;
    }
    Ok(IpDoublingStep {
        state: DoublingState { epoch, accumulated },
        restart: epoch != state.epoch,
        eta: ip_eta(epoch, ln_k),
    })
}

/// Parameters in force during one doubling epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochParams {
    pub eta: f64,
    pub m: usize,
    /// Confidence width; Exp3-UP only.
    pub xi: Option<f64>,
}

/// First epoch for Exp3-UP: `ceil(log2 K)`.
pub fn up_start_epoch(k: usize) -> u32 {
    (k.max(1) as f64).log2().ceil() as u32
}

/// Exp3-UP parameters for epoch `b` (rounds `2^b < t <= 2^(b+1)`):
///
/// * `eta = sqrt(ln K / 2^(b+1))`
/// * `M = ceil(2^(2(b+1)/3) / sqrt(K) + ln 4K)`
/// * `xi = (2 K^(1/4) + sqrt(4 sqrt(K) + 1)) * sqrt(ln(K 2^(b+3)))`
pub fn up_doubling_params(b: u32, k: usize) -> Result<EpochParams> {
    if k < 2 {
        return Err(Error::arg("the Exp3-UP doubling schedule needs K >= 2"));
    }
    let start = up_start_epoch(k);
    if b < start {
        return Err(Error::arg(format!("epoch {b} precedes the starting epoch ceil(log2 K) = {start}")));
    }
    let kf = k as f64;
    let eta = (kf.ln() / 2f64.powi(b as i32 + 1)).sqrt();
    let m = (2f64.powf(2.0 * (b as f64 + 1.0) / 3.0) / kf.sqrt() + (4.0 * kf).ln()).ceil() as usize;
    let xi = (2.0 * kf.powf(0.25) + (4.0 * kf.sqrt() + 1.0).sqrt())
        * (kf.ln() + (b as f64 + 3.0) * std::f64::consts::LN_2).sqrt();
    Ok(EpochParams { eta, m, xi: Some(xi) })
}

/// Exp3-GR parameters for epoch `b`:
///
/// * `eta = sqrt(ln K / 2^(b+1))`
/// * `M = ceil((b+1) sqrt(2^(b-1)) |D| ln 2 / (epsilon sqrt(ln K)))`
pub fn gr_doubling_params(b: u32, k: usize, dom_size: usize, epsilon: f64) -> Result<EpochParams> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::arg(format!(
            "the Exp3-GR doubling schedule needs a lower bound epsilon in (0, 1], got {epsilon}"
        )));
    }
    if dom_size == 0 {
        return Err(Error::arg("dominating set size must be at least 1"));
    }
    if k < 2 {
        return Err(Error::arg("the Exp3-GR doubling schedule needs K >= 2"));
    }
    let ln_k = (k as f64).ln();
    let eta = (ln_k / 2f64.powi(b as i32 + 1)).sqrt();
    let m = raw_gr_m(b, dom_size, epsilon, ln_k).ceil() as usize;
    Ok(EpochParams { eta, m, xi: None })
}

fn raw_gr_m(b: u32, dom_size: usize, epsilon: f64, ln_k: f64) -> f64 {
    (b as f64 + 1.0) * 2f64.powi(b as i32 - 1).sqrt() * dom_size as f64 * std::f64::consts::LN_2
        / (epsilon * ln_k.sqrt())
}

/// Epoch containing round `t`: the smallest `b >= start` with `t <= 2^(b+1)`.
pub fn epoch_for_round(t: u64, start: u32) -> u32 {
    let mut b = start;
    while (t as f64) > 2f64.powi(b as i32 + 1) {
        b += 1;
    }
    b
}

/// Extra exploration picks each expert needs so that it has been explored at
/// least `m_new` times.
pub fn exploration_deficits(explored: &[usize], m_new: usize) -> Vec<usize> {
    explored.iter().map(|&e| m_new.saturating_sub(e)).collect()
}
