//! Entrance arbitration: decides which approaching vehicles may enter the
//! box this step so that no two conflicting movements are inside together.
//!
//! Vehicles already inside the box, and previously granted vehicles that can
//! no longer stop before the entrance line, are committed. Remaining
//! vehicles close enough to need a decision are granted greedily in order of
//! projected entry time; any vehicle whose movement conflicts with something
//! already granted is held at the entrance.

use std::collections::BTreeSet;

use crate::movement::{conflicts, MovementId};
use crate::vehicle::{Phase, VehicleId};

use super::SimState;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HoldDecision {
    /// Vehicles that must stop at the entrance line this step.
    pub held: BTreeSet<VehicleId>,
    /// Vehicles allowed into (or already inside) the box.
    pub granted: BTreeSet<VehicleId>,
}

/// Vehicles the simulator holds at the entrance this step.
pub fn conflict_manager(state: &SimState) -> BTreeSet<VehicleId> {
    decide(state, &BTreeSet::new(), &BTreeSet::new()).held
}

/// Distance within which a vehicle at speed `v` must be arbitrated.
pub(crate) fn decision_horizon(state: &SimState, v: f64) -> f64 {
    let p = &state.params;
    v * v / (2.0 * p.idm.b_comf) + v * p.dt + p.hold_horizon
}

/// True when a vehicle cannot stop before the line even at full emergency
/// braking (with one step of reaction slack).
pub(crate) fn cannot_stop(state: &SimState, d: f64, v: f64) -> bool {
    let p = &state.params;
    d < v * v / (2.0 * p.b_emergency) + v * p.dt
}

/// Full arbitration. `external` are vehicles held by an outside controller
/// (e.g. a red signal); `yielding` are RVs advised to stop at the entrance.
/// Neither can be granted, but only `external` ones count as holds.
pub fn decide(state: &SimState, external: &BTreeSet<VehicleId>, yielding: &BTreeSet<VehicleId>) -> HoldDecision {
    let entrance = state.spec.entrance_line();
    let topo = state.topology();
    let vs = &state.vehicles;

    let mut granted = BTreeSet::new();
    let mut granted_movements: Vec<MovementId> = Vec::new();
    let mut is_granted = vec![false; vs.len()];

    for (i, v) in vs.iter().enumerate() {
        if v.phase == Phase::InsideBox {
            granted.insert(v.id);
            granted_movements.push(v.movement);
            is_granted[i] = true;
        }
    }
    for (i, v) in vs.iter().enumerate() {
        if v.phase == Phase::Approaching
            && state.granted.contains(&v.id)
            && cannot_stop(state, entrance - v.pos, v.speed)
        {
            granted.insert(v.id);
            granted_movements.push(v.movement);
            is_granted[i] = true;
        }
    }

    // Projected entry times, made monotone along each lane so that a vehicle
    // is always considered after the vehicle in front of it.
    let mut t_entry = vec![f64::INFINITY; vs.len()];
    for &i in &topo.approach_order {
        let v = &vs[i];
        let d = entrance - v.pos;
        let own = d / v.speed.max(1.0);
        t_entry[i] = match topo.lane_leader[i] {
            Some(l) => own.max(t_entry[l]),
            None => own,
        };
    }

    let mut candidates: Vec<usize> = vs
        .iter()
        .enumerate()
        .filter(|(i, v)| {
            v.phase == Phase::Approaching
                && !is_granted[*i]
                && entrance - v.pos <= decision_horizon(state, v.speed)
        })
        .map(|(i, _)| i)
        .collect();
    candidates.sort_by(|&a, &b| {
        t_entry[a]
            .total_cmp(&t_entry[b])
            .then((entrance - vs[a].pos).total_cmp(&(entrance - vs[b].pos)))
            .then(vs[a].id.cmp(&vs[b].id))
    });

    let mut held = BTreeSet::new();
    for i in candidates {
        let v = &vs[i];
        if external.contains(&v.id) {
            held.insert(v.id);
            continue;
        }
        if yielding.contains(&v.id) {
            continue;
        }
        // Blocked behind an ungranted vehicle in the same lane: it cannot
        // reach the line this step anyway, so neither grant nor hold it.
        if let Some(l) = topo.lane_leader[i] {
            if !is_granted[l] {
                continue;
            }
        }
        if granted_movements.iter().any(|m| conflicts(*m, v.movement)) {
            held.insert(v.id);
        } else {
            granted.insert(v.id);
            granted_movements.push(v.movement);
            is_granted[i] = true;
        }
    }
    // External holds outside the decision horizon still get the stop profile.
    for (i, v) in vs.iter().enumerate() {
        if v.phase == Phase::Approaching && !is_granted[i] && external.contains(&v.id) {
            held.insert(v.id);
        }
    }
    HoldDecision { held, granted }
}
