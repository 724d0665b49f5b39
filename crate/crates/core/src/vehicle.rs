use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::LaneId;
use crate::movement::MovementId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId(pub u64);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VehicleKind {
    /// Robot vehicle, driven by the controller.
    Rv,
    /// Human-driven vehicle, follows IDM.
    Hv,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Rv => "RV",
            VehicleKind::Hv => "HV",
        }
    }
}

/// Transitions only go forward: Approaching -> InsideBox -> Departed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Approaching,
    InsideBox,
    Departed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub kind: VehicleKind,
    pub movement: MovementId,
    /// Lane index within the vehicle's approach (0 = leftmost).
    pub lane: usize,
    /// Front bumper coordinate, see [`crate::geometry`].
    pub pos: f64,
    pub speed: f64,
    pub accel: f64,
    /// Seconds spent stationary inside the control zone.
    pub wait_clock: f64,
    /// Number of steps counted into `wait_clock`; the clock is always
    /// `wait_steps * dt` so it carries no summation drift.
    pub wait_steps: u64,
    pub phase: Phase,
    pub lc_cooldown: f64,
    /// Set once the vehicle has been inside the control zone.
    pub entered_zone: bool,
}

impl VehicleState {
    pub fn new(id: VehicleId, kind: VehicleKind, movement: MovementId, lane: usize, pos: f64, speed: f64) -> Self {
        VehicleState {
            id,
            kind,
            movement,
            lane,
            pos,
            speed,
            accel: 0.0,
            wait_clock: 0.0,
            wait_steps: 0,
            phase: Phase::Approaching,
            lc_cooldown: 0.0,
            entered_zone: false,
        }
    }

    pub fn is_rv(&self) -> bool {
        self.kind == VehicleKind::Rv
    }

    pub fn lane_id(&self) -> LaneId {
        LaneId { approach: self.movement.approach, index: self.lane }
    }

    pub fn rear(&self, length: f64) -> f64 {
        self.pos - length
    }
}
