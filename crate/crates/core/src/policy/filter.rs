//! Distance-banded speed limits for Stop-advised robot vehicles.
//!
//! Each band caps the speed while the vehicle is inside it. To make the caps
//! reachable without exceeding emergency braking, the limit of every band is
//! extended upstream by a braking parabola, so a vehicle slows down before
//! it reaches a tighter band rather than after.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::IntersectionSpec;
use crate::kinematics::{capped_accel, piece_profile, piece_speed_cap, POSITION_MARGIN};
use crate::sim::{RvCommand, SimParams};
use crate::vehicle::VehicleState;

use super::Decision;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Band {
    pub d_low: f64,
    pub d_high: f64,
    pub v_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SafetyBands {
    pub bands: Vec<Band>,
}

impl Default for SafetyBands {
    fn default() -> Self {
        let b = |d_low, d_high, v_limit| Band { d_low, d_high, v_limit };
        SafetyBands { bands: vec![b(20.0, 30.0, 3.0), b(10.0, 20.0, 2.0), b(5.0, 10.0, 1.0), b(0.0, 5.0, 0.0)] }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BandError {
    #[error("no bands given")]
    Empty,
    #[error("band {0} is malformed (needs 0 <= d_low < d_high and a finite limit >= 0)")]
    Malformed(usize),
    #[error("bands must tile (0, d_max] contiguously from the entrance outward")]
    NotContiguous,
    #[error("speed limits must not increase toward the entrance")]
    NotMonotone,
}

impl SafetyBands {
    /// Bands sorted from the entrance outward.
    fn sorted(&self) -> Vec<Band> {
        let mut b = self.bands.clone();
        b.sort_by(|x, y| x.d_low.total_cmp(&y.d_low));
        b
    }

    pub fn validate(&self) -> Result<(), BandError> {
        if self.bands.is_empty() {
            return Err(BandError::Empty);
        }
        for (i, b) in self.bands.iter().enumerate() {
            let ok = b.d_low.is_finite()
                && b.d_high.is_finite()
                && b.v_limit.is_finite()
                && b.d_low >= 0.0
                && b.d_low < b.d_high
                && b.v_limit >= 0.0;
            if !ok {
                return Err(BandError::Malformed(i));
            }
        }
        let s = self.sorted();
        if s[0].d_low != 0.0 || s.windows(2).any(|w| w[0].d_high != w[1].d_low) {
            return Err(BandError::NotContiguous);
        }
        if s.windows(2).any(|w| w[0].v_limit > w[1].v_limit) {
            return Err(BandError::NotMonotone);
        }
        Ok(())
    }

    pub fn outer_edge(&self) -> f64 {
        self.bands.iter().map(|b| b.d_high).fold(0.0, f64::max)
    }

    /// Limit of the band containing `d` (bands are `(d_low, d_high]`, the
    /// innermost also includes 0). `None` beyond the outermost band.
    pub fn limit_at(&self, d: f64) -> Option<f64> {
        self.sorted()
            .iter()
            .find(|b| (d > b.d_low || (b.d_low == 0.0 && d >= 0.0)) && d <= b.d_high)
            .map(|b| b.v_limit)
    }

    /// Speed envelope: the largest speed at distance `x` from which every
    /// band can still be honoured braking at `decel`.
    pub fn envelope(&self, x: f64, decel: f64) -> f64 {
        self.bands.iter().map(|b| piece_profile(x, b.v_limit, b.d_high, decel)).fold(f64::INFINITY, f64::min)
    }

    /// Highest admissible post-step speed at distance `d`.
    pub fn speed_cap(&self, d: f64, dt: f64, decel: f64) -> f64 {
        let d = d - POSITION_MARGIN;
        self.bands.iter().map(|b| piece_speed_cap(d, dt, b.v_limit, b.d_high, decel)).fold(f64::INFINITY, f64::min)
    }
}

/// Applies the band limits to a Stop-advised command. Go commands pass
/// through untouched; lane changes always pass through.
pub fn safety_filter(
    cmd: RvCommand,
    v: &VehicleState,
    bands: &SafetyBands,
    decision: Decision,
    spec: &IntersectionSpec,
    p: &SimParams,
) -> RvCommand {
    if decision == Decision::Go {
        return cmd;
    }
    let d = (spec.entrance_line() - v.pos).max(0.0);
    let cap = bands.speed_cap(d, p.dt, p.stop_decel());
    RvCommand { accel: capped_accel(cmd.accel, v.speed, cap, p.dt, p.b_emergency), ..cmd }
}
