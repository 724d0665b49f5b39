//! Two-level controller: a Go/Stop head, a continuous acceleration and
//! lane-change head, their composition into a vehicle command, and the
//! distance-banded speed filter.

pub mod checkpoint;
pub mod filter;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::Mlp;
use crate::observe::ObsParams;
use crate::sim::{LaneChange, RvCommand, SimParams};

pub use filter::{safety_filter, Band, SafetyBands};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Lane-change threshold on the raw `lc` output.
pub const LC_THRESHOLD: f64 = 0.33;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Go,
    Stop,
}

impl Decision {
    pub fn index(self) -> usize {
        match self {
            Decision::Go => 0,
            Decision::Stop => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Decision::Go
        } else {
            Decision::Stop
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Go => "go",
            Decision::Stop => "stop",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawLowAction {
    pub acc: f64,
    pub lc: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("network produced a non-finite output: {0:?}")]
    NonFinite(Vec<f64>),
    #[error("lane-change output {0} outside [-1, 1]")]
    OutOfRange(f64),
    #[error("observation has length {got}, network expects {expected}")]
    ObsLength { got: usize, expected: usize },
}

/// Left below the lower threshold, Right above the upper one, Keep on the
/// closed interval between them.
pub fn decode_lane_change(lc: f64) -> Result<LaneChange, PolicyError> {
    if !(-1.0..=1.0).contains(&lc) {
        return Err(PolicyError::OutOfRange(lc));
    }
    Ok(if lc < -LC_THRESHOLD {
        LaneChange::Left
    } else if lc > LC_THRESHOLD {
        LaneChange::Right
    } else {
        LaneChange::Keep
    })
}

/// Command before the speed filter. Go ignores the low-level action.
pub fn compose(decision: Decision, raw: RawLowAction, p: &SimParams) -> Result<RvCommand, PolicyError> {
    Ok(match decision {
        Decision::Go => RvCommand { accel: p.a_max_rv, lane_change: LaneChange::Keep, stop_at_entrance: false },
        Decision::Stop => {
            let b = p.idm.b_comf;
            let acc = raw.acc.clamp(-1.0, 1.0);
            RvCommand {
                accel: -b + (acc + 1.0) / 2.0 * (p.a_max_rv + b),
                lane_change: decode_lane_change(raw.lc)?,
                stop_at_entrance: true,
            }
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: vec![256, 256] }
    }
}

/// Weights of both policy heads and both value functions, shared by all
/// robot vehicles.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub high: Mlp,
    pub low: Mlp,
    pub value_high: Mlp,
    pub value_low: Mlp,
}

fn sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = vec![input];
    s.extend_from_slice(hidden);
    s.push(output);
    s
}

impl PolicyParams {
    pub fn new<R: Rng>(obs: &ObsParams, net: &NetConfig, rng: &mut R) -> Self {
        let h = &net.hidden;
        PolicyParams {
            high: Mlp::new(&sizes(obs.high_len(), h, 2), 0.01, rng),
            low: Mlp::new(&sizes(obs.low_len(), h, 4), 0.01, rng),
            value_high: Mlp::new(&sizes(obs.high_len(), h, 1), 1.0, rng),
            value_low: Mlp::new(&sizes(obs.low_len(), h, 1), 1.0, rng),
        }
    }

    pub fn zeros(obs: &ObsParams, net: &NetConfig) -> Self {
        let h = &net.hidden;
        PolicyParams {
            high: Mlp::zeros(&sizes(obs.high_len(), h, 2)),
            low: Mlp::zeros(&sizes(obs.low_len(), h, 4)),
            value_high: Mlp::zeros(&sizes(obs.high_len(), h, 1)),
            value_low: Mlp::zeros(&sizes(obs.low_len(), h, 1)),
        }
    }

    pub fn nets(&self) -> [&Mlp; 4] {
        [&self.high, &self.low, &self.value_high, &self.value_low]
    }

    pub fn all_finite(&self) -> bool {
        self.nets().iter().all(|n| n.params.iter().all(|p| p.is_finite()))
    }

    /// Checks the network shapes against an observation layout.
    pub fn matches(&self, obs: &ObsParams) -> bool {
        self.high.input_len() == obs.high_len()
            && self.high.output_len() == 2
            && self.low.input_len() == obs.low_len()
            && self.low.output_len() == 4
            && self.value_high.input_len() == obs.high_len()
            && self.value_high.output_len() == 1
            && self.value_low.input_len() == obs.low_len()
            && self.value_low.output_len() == 1
    }
}

fn check_len(net: &Mlp, obs: &[f64]) -> Result<(), PolicyError> {
    if obs.len() != net.input_len() {
        return Err(PolicyError::ObsLength { got: obs.len(), expected: net.input_len() });
    }
    Ok(())
}

fn finite(v: Vec<f64>) -> Result<Vec<f64>, PolicyError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(PolicyError::NonFinite(v))
    }
}

/// Log-probabilities of the two actions.
pub fn log_softmax2(logits: &[f64]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    [logits[0] - lse, logits[1] - lse]
}

pub fn high_logits(obs: &[f64], params: &PolicyParams) -> Result<Vec<f64>, PolicyError> {
    check_len(&params.high, obs)?;
    finite(params.high.forward(obs))
}

/// Samples (or in deterministic mode takes the arg-max of) the Go/Stop head.
pub fn high_level_act<R: Rng>(
    obs: &[f64],
    params: &PolicyParams,
    rng: &mut R,
    deterministic: bool,
) -> Result<(Decision, f64), PolicyError> {
    let logits = high_logits(obs, params)?;
    Ok(act_from_logits(&logits, rng, deterministic))
}

pub fn act_from_logits<R: Rng>(logits: &[f64], rng: &mut R, deterministic: bool) -> (Decision, f64) {
    let lp = log_softmax2(logits);
    let idx = if deterministic {
        usize::from(logits[1] > logits[0])
    } else {
        let u: f64 = rng.random();
        usize::from(u >= lp[0].exp())
    };
    (Decision::from_index(idx), lp[idx])
}

/// Means and clamped log-std of the continuous head.
pub fn low_dist(obs: &[f64], params: &PolicyParams) -> Result<([f64; 2], [f64; 2]), PolicyError> {
    check_len(&params.low, obs)?;
    let out = finite(params.low.forward(obs))?;
    Ok((
        [out[0], out[1]],
        [out[2].clamp(LOG_STD_MIN, LOG_STD_MAX), out[3].clamp(LOG_STD_MIN, LOG_STD_MAX)],
    ))
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `ln(1 - tanh(u)^2)` without cancellation for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    let softplus = |x: f64| x.max(0.0) + (-x.abs()).exp().ln_1p();
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Log-density of the squashed action `tanh(u)` for pre-squash sample `u`.
pub fn squashed_log_prob(u: [f64; 2], mean: [f64; 2], log_std: [f64; 2]) -> f64 {
    (0..2)
        .map(|k| {
            let z = (u[k] - mean[k]) / log_std[k].exp();
            -0.5 * z * z - log_std[k] - 0.5 * LN_2PI - log_one_minus_tanh_sq(u[k])
        })
        .sum()
}

/// Samples the continuous head. Returns the squashed action, the pre-squash
/// sample and its log-probability.
pub fn low_level_act<R: Rng>(
    obs: &[f64],
    params: &PolicyParams,
    rng: &mut R,
    deterministic: bool,
) -> Result<(RawLowAction, [f64; 2], f64), PolicyError> {
    let (mean, log_std) = low_dist(obs, params)?;
    let u = if deterministic {
        mean
    } else {
        let e0: f64 = StandardNormal.sample(rng);
        let e1: f64 = StandardNormal.sample(rng);
        [mean[0] + log_std[0].exp() * e0, mean[1] + log_std[1].exp() * e1]
    };
    let raw = RawLowAction { acc: u[0].tanh(), lc: u[1].tanh() };
    Ok((raw, u, squashed_log_prob(u, mean, log_std)))
}
