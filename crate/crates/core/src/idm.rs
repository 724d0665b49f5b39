//! Intelligent Driver Model longitudinal law.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed (m/s).
    pub v0: f64,
    /// Desired time headway (s).
    pub time_headway: f64,
    /// Maximum acceleration (m/s²).
    pub a_max: f64,
    /// Comfortable deceleration, positive (m/s²).
    pub b_comf: f64,
    /// Minimum standstill gap (m).
    pub s0: f64,
    /// Acceleration exponent.
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        IdmParams { v0: 13.9, time_headway: 1.5, a_max: 2.6, b_comf: 4.5, s0: 2.0, delta: 4.0 }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<(), IdmError> {
        let all = [self.v0, self.time_headway, self.a_max, self.b_comf, self.s0, self.delta];
        if all.iter().all(|x| x.is_finite() && *x > 0.0) {
            Ok(())
        } else {
            Err(IdmError::InvalidParams(*self))
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum IdmError {
    /// A leader overlapping its follower means an upstream guard failed.
    #[error("non-positive gap {0} to leader")]
    NonPositiveGap(f64),
    #[error("IDM parameters must be finite and strictly positive: {0:?}")]
    InvalidParams(IdmParams),
}

/// Acceleration of a vehicle at speed `v` with bumper gap `gap` to a leader
/// travelling at `v_leader`. Pass `f64::INFINITY` as `gap` when there is no
/// leader. The result is clamped below at `-b_emergency`.
pub fn idm_accel(v: f64, gap: f64, v_leader: f64, p: &IdmParams, b_emergency: f64) -> Result<f64, IdmError> {
    if !(gap > 0.0) {
        return Err(IdmError::NonPositiveGap(gap));
    }
    let free = (v / p.v0).powf(p.delta);
    let interaction = if gap.is_infinite() {
        0.0
    } else {
        let dv = v - v_leader;
        let s_star = p.s0 + (v * p.time_headway + v * dv / (2.0 * (p.a_max * p.b_comf).sqrt())).max(0.0);
        (s_star / gap).powi(2)
    };
    Ok((p.a_max * (1.0 - free - interaction)).max(-b_emergency))
}
