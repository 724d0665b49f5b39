//! Instantaneous lateral lane swaps for robot vehicles.

use thiserror::Error;

use crate::vehicle::{Phase, VehicleId};

use super::{EventKind, LaneChange, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum LaneChangeRejection {
    #[error("no lane in that direction")]
    NoAdjacentLane,
    #[error("target lane does not permit the vehicle's movement")]
    MovementForbidden,
    #[error("gap to the new leader or follower is too small")]
    UnsafeGap,
    #[error("lane-change cooldown still running")]
    CooldownActive,
    #[error("only approaching robot vehicles may change lanes")]
    NotControllable,
}

/// Swaps vehicle `id` one lane to the left (lower index) or right. The
/// outcome, success or rejection, is logged. `Keep` is a no-op.
pub fn apply_lane_change(state: &mut SimState, id: VehicleId, dir: LaneChange) -> Result<(), LaneChangeRejection> {
    let Some(i) = state.index_of(id) else {
        return Err(LaneChangeRejection::NotControllable);
    };
    let result = check(state, i, dir);
    match result {
        Ok(None) => Ok(()),
        Ok(Some(target)) => {
            let from = state.vehicles[i].lane;
            let cooldown = state.params.lc_cooldown;
            let v = &mut state.vehicles[i];
            v.lane = target;
            v.lc_cooldown = cooldown;
            state.log_idx(EventKind::LaneChange { from, to: target }, i);
            Ok(())
        }
        Err(r) => {
            state.log_idx(EventKind::LaneChangeRejected(r), i);
            Err(r)
        }
    }
}

fn check(state: &SimState, i: usize, dir: LaneChange) -> Result<Option<usize>, LaneChangeRejection> {
    let v = &state.vehicles[i];
    if !v.is_rv() || v.phase != Phase::Approaching {
        return Err(LaneChangeRejection::NotControllable);
    }
    let target = match dir {
        LaneChange::Keep => return Ok(None),
        LaneChange::Left => v.lane.checked_sub(1),
        LaneChange::Right => Some(v.lane + 1).filter(|&l| l < state.spec.lanes_per_approach),
    };
    if v.lc_cooldown > 0.0 {
        return Err(LaneChangeRejection::CooldownActive);
    }
    let target = target.ok_or(LaneChangeRejection::NoAdjacentLane)?;
    if !state.spec.lane_permits(target, v.movement) {
        return Err(LaneChangeRejection::MovementForbidden);
    }
    let len = state.params.vehicle_length;
    let s0 = state.params.idm.s0;
    let entrance = state.spec.entrance_line();
    for o in &state.vehicles {
        if o.id == v.id || o.movement.approach != v.movement.approach || o.lane != target {
            continue;
        }
        // Box vehicles only matter while their tail is still on the lane.
        if o.phase == Phase::InsideBox && o.pos - len >= entrance {
            continue;
        }
        let gap = if o.pos >= v.pos { o.pos - len - v.pos } else { v.pos - len - o.pos };
        if gap <= s0 {
            return Err(LaneChangeRejection::UnsafeGap);
        }
    }
    Ok(Some(target))
}
