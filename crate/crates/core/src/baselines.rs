//! Comparison controllers: a fixed-time signal and a Go/Stop-only controller.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idm::idm_accel;
use crate::movement::{conflicts, MovementId, MovementSet};
use crate::policy::Decision;
use crate::sim::{LaneChange, RvCommand, SimParams, SimState};
use crate::vehicle::{Phase, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPhase {
    pub movements: Vec<MovementId>,
    /// Green seconds.
    pub green: f64,
    /// All-red seconds after the green.
    pub all_red: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPlan {
    pub phases: Vec<SignalPhase>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("signal plan has no phases")]
    Empty,
    #[error("phase {phase} lets conflicting movements {a} and {b} go together")]
    Conflicting { phase: usize, a: MovementId, b: MovementId },
    #[error("phase {0} has a non-positive green or negative all-red time")]
    BadTiming(usize),
    #[error("movement {0} never gets green")]
    Uncovered(MovementId),
}

impl Default for SignalPlan {
    fn default() -> Self {
        let ph = |a: &str, b: &str| SignalPhase {
            movements: vec![a.parse().expect("valid"), b.parse().expect("valid")],
            green: 30.0,
            all_red: 3.0,
        };
        SignalPlan { phases: vec![ph("S-C", "N-C"), ph("S-L", "N-L"), ph("E-C", "W-C"), ph("E-L", "W-L")] }
    }
}

impl SignalPlan {
    pub fn validate(&self) -> Result<(), PlanError> {
        if self.phases.is_empty() {
            return Err(PlanError::Empty);
        }
        let mut covered = MovementSet::EMPTY;
        for (i, ph) in self.phases.iter().enumerate() {
            if !(ph.green.is_finite() && ph.green > 0.0 && ph.all_red.is_finite() && ph.all_red >= 0.0) {
                return Err(PlanError::BadTiming(i));
            }
            for (k, &a) in ph.movements.iter().enumerate() {
                covered.insert(a);
                if let Some(&b) = ph.movements[k + 1..].iter().find(|&&b| conflicts(a, b)) {
                    return Err(PlanError::Conflicting { phase: i, a, b });
                }
            }
        }
        match MovementId::ALL.into_iter().find(|m| !covered.contains(*m)) {
            Some(m) => Err(PlanError::Uncovered(m)),
            None => Ok(()),
        }
    }

    pub fn cycle(&self) -> f64 {
        self.phases.iter().map(|p| p.green + p.all_red).sum()
    }

    /// Index of the phase whose slot contains `t`, and whether it is green.
    pub fn phase_at(&self, t: f64) -> (usize, bool) {
        let mut tau = t.rem_euclid(self.cycle());
        for (i, p) in self.phases.iter().enumerate() {
            if tau < p.green {
                return (i, true);
            }
            tau -= p.green;
            if tau < p.all_red {
                return (i, false);
            }
            tau -= p.all_red;
        }
        // Rounding at the very end of the cycle.
        (self.phases.len() - 1, false)
    }

    pub fn green_movements(&self, t: f64) -> MovementSet {
        match self.phase_at(t) {
            (i, true) => self.phases[i].movements.iter().copied().collect(),
            (_, false) => MovementSet::EMPTY,
        }
    }
}

/// Approaching vehicles facing red, to be held at the entrance.
pub fn tl_control(state: &SimState, plan: &SignalPlan) -> BTreeSet<crate::vehicle::VehicleId> {
    let green = plan.green_movements(state.time);
    state
        .vehicles
        .iter()
        .filter(|v| v.phase == Phase::Approaching && !green.contains(v.movement))
        .map(|v| v.id)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HlOnlyConfig {
    /// Comfortable deceleration used to come to rest at the entrance.
    pub stop_decel: f64,
}

impl Default for HlOnlyConfig {
    fn default() -> Self {
        HlOnlyConfig { stop_decel: 4.5 }
    }
}

/// Command of the Go/Stop-only controller. Go is full acceleration; Stop
/// follows car-following braking toward a standing obstacle at the entrance
/// line. Never changes lanes.
pub fn hl_only_act(v: &VehicleState, decision: Decision, entrance: f64, cfg: &HlOnlyConfig, p: &SimParams) -> RvCommand {
    match decision {
        Decision::Go => RvCommand { accel: p.a_max_rv, lane_change: LaneChange::Keep, stop_at_entrance: false },
        Decision::Stop => {
            let idm = crate::idm::IdmParams { b_comf: cfg.stop_decel, ..p.idm };
            // Virtual obstacle whose rear sits on the entrance line, so the
            // standstill gap s0 is measured from the line.
            let gap = (entrance - v.pos).max(0.0) + idm.s0;
            let a = idm_accel(v.speed, gap, 0.0, &idm, p.b_emergency).unwrap_or(-p.b_emergency);
            RvCommand { accel: a, lane_change: LaneChange::Keep, stop_at_entrance: true }
        }
    }
}
