//! Intersection layout in a per-lane 1-D frame.
//!
//! Every approach lane runs from `0` (spawn point) to `lane_length`, where it
//! meets the box at the entrance line. Inside the box each vehicle continues
//! on its own interior path, so a front-bumper coordinate in
//! `(lane_length, lane_length + interior_length]` means "inside the box".

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::movement::{Approach, MovementId, MovementSet, Turn};
use crate::vehicle::{Phase, VehicleState};

/// How turns are distributed over the lanes of an approach.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LaneMode {
    /// Leftmost lane carries left turns, the others carry crossing traffic.
    #[default]
    Dedicated,
    /// Every lane permits both turns.
    Shared,
}

/// Lane addressed by approach and index (0 = leftmost).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LaneId {
    pub approach: Approach,
    pub index: usize,
}

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("distance to entrance is only defined for approaching vehicles (phase {0:?})")]
    NotApproaching(Phase),
    #[error("invalid intersection: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionSpec {
    pub lanes_per_approach: usize,
    pub lane_mode: LaneMode,
    pub lane_length: f64,
    pub interior_length: f64,
    pub control_zone_radius: f64,
    // Permitted turns per lane index, shared by all four approaches.
    lane_turns: Vec<LaneTurns>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LaneTurns {
    left: bool,
    cross: bool,
}

impl Default for IntersectionSpec {
    fn default() -> Self {
        IntersectionSpec::new(2, LaneMode::Dedicated, 200.0, 20.0, 50.0)
            .expect("default intersection is valid")
    }
}

impl IntersectionSpec {
    pub fn new(
        lanes_per_approach: usize,
        lane_mode: LaneMode,
        lane_length: f64,
        interior_length: f64,
        control_zone_radius: f64,
    ) -> Result<Self, GeometryError> {
        let invalid = |m: &str| Err(GeometryError::Invalid(m.to_string()));
        if lanes_per_approach == 0 || lanes_per_approach > 8 {
            return invalid("lanes_per_approach must be in 1..=8");
        }
        if lane_mode == LaneMode::Dedicated && lanes_per_approach < 2 {
            return invalid("dedicated lane mode needs at least two lanes per approach");
        }
        if !(lane_length.is_finite() && lane_length > 0.0) {
            return invalid("lane_length must be positive");
        }
        if !(interior_length.is_finite() && interior_length > 0.0) {
            return invalid("interior_length must be positive");
        }
        if !(control_zone_radius.is_finite() && control_zone_radius >= 30.0) {
            return invalid("control_zone_radius must be at least 30 m");
        }
        if control_zone_radius > lane_length {
            return invalid("control_zone_radius exceeds lane_length");
        }
        let lane_turns = (0..lanes_per_approach)
            .map(|i| match lane_mode {
                LaneMode::Shared => LaneTurns { left: true, cross: true },
                LaneMode::Dedicated => LaneTurns { left: i == 0, cross: i != 0 },
            })
            .collect();
        Ok(IntersectionSpec {
            lanes_per_approach,
            lane_mode,
            lane_length,
            interior_length,
            control_zone_radius,
            lane_turns,
        })
    }

    /// Longitudinal coordinate of the entrance line on every approach lane.
    pub fn entrance_line(&self) -> f64 {
        self.lane_length
    }

    /// Coordinate at which a vehicle's front leaves its interior path.
    pub fn exit_line(&self) -> f64 {
        self.lane_length + self.interior_length
    }

    pub fn lane_count(&self) -> usize {
        4 * self.lanes_per_approach
    }

    /// Dense index over all approach lanes, approach-major.
    pub fn lane_index(&self, lane: LaneId) -> usize {
        lane.approach.index() * self.lanes_per_approach + lane.index
    }

    pub fn lanes(&self) -> impl Iterator<Item = LaneId> + '_ {
        Approach::ALL.into_iter().flat_map(move |approach| {
            (0..self.lanes_per_approach).map(move |index| LaneId { approach, index })
        })
    }

    /// Whether `lane` (index within its approach) may carry movement `mv`.
    pub fn lane_permits(&self, lane: usize, mv: MovementId) -> bool {
        self.lane_turns
            .get(lane)
            .map(|t| match mv.turn {
                Turn::L => t.left,
                Turn::C => t.cross,
            })
            .unwrap_or(false)
    }

    /// Movements of `approach` that `lane` may carry.
    pub fn lane_movements(&self, approach: Approach, lane: usize) -> MovementSet {
        [Turn::L, Turn::C]
            .into_iter()
            .map(|turn| MovementId::new(approach, turn))
            .filter(|mv| self.lane_permits(lane, *mv))
            .collect()
    }

    /// Lanes of `mv`'s approach that permit it.
    pub fn lanes_for(&self, mv: MovementId) -> Vec<usize> {
        (0..self.lanes_per_approach).filter(|&i| self.lane_permits(i, mv)).collect()
    }

    /// Distance from an approaching vehicle's front bumper to the entrance.
    pub fn distance_to_entrance(&self, v: &VehicleState) -> Result<f64, GeometryError> {
        if v.phase != Phase::Approaching {
            return Err(GeometryError::NotApproaching(v.phase));
        }
        Ok((self.entrance_line() - v.pos).max(0.0))
    }

    /// Control zone membership: the last `control_zone_radius` metres of the
    /// approach lane plus the box itself.
    pub fn in_control_zone(&self, v: &VehicleState) -> bool {
        match v.phase {
            Phase::Approaching => self.entrance_line() - v.pos <= self.control_zone_radius,
            Phase::InsideBox => true,
            Phase::Departed => false,
        }
    }
}

/// Free function form of [`IntersectionSpec::distance_to_entrance`].
pub fn distance_to_entrance(v: &VehicleState, spec: &IntersectionSpec) -> Result<f64, GeometryError> {
    spec.distance_to_entrance(v)
}
