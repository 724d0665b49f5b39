//! Observation vectors, step reward and run metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::IntersectionSpec;
use crate::movement::MovementId;
use crate::sim::{EventKind, EventLog, SimState};
use crate::vehicle::{Phase, VehicleId, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsParams {
    /// Occupancy cells per movement.
    pub bins: usize,
    /// Waiting time (s) that normalizes to 1.
    pub w_max: f64,
}

impl Default for ObsParams {
    fn default() -> Self {
        ObsParams { bins: 10, w_max: 120.0 }
    }
}

impl ObsParams {
    pub fn macro_len(&self) -> usize {
        16 + 8 * self.bins
    }

    pub fn high_len(&self) -> usize {
        self.macro_len() + 1
    }

    pub fn low_len(&self) -> usize {
        self.macro_len() + 3
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ObsError {
    #[error("vehicle {0} does not exist")]
    UnknownVehicle(VehicleId),
    #[error("vehicle {0} is not a robot vehicle")]
    NotRv(VehicleId),
    #[error("vehicle {0} is not approaching the intersection")]
    NotApproaching(VehicleId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovementStats {
    pub queue_len: usize,
    pub avg_wait: f64,
    pub occupancy: Vec<bool>,
}

fn in_zone_approaching(spec: &IntersectionSpec, v: &VehicleState) -> bool {
    v.phase == Phase::Approaching && spec.entrance_line() - v.pos <= spec.control_zone_radius
}

pub fn movement_stats(state: &SimState, mv: MovementId, params: &ObsParams) -> MovementStats {
    let spec = &state.spec;
    let r = spec.control_zone_radius;
    let cell = r / params.bins as f64;
    let len = state.params.vehicle_length;
    let mut occupancy = vec![false; params.bins];
    let mut queue_len = 0;
    let mut wait_sum = 0.0;
    for v in state.vehicles.iter().filter(|v| v.movement == mv && v.phase == Phase::Approaching) {
        let d = spec.entrance_line() - v.pos;
        if d <= r && v.speed < state.params.v_stop {
            queue_len += 1;
            wait_sum += v.wait_clock;
        }
        // The body covers distances [d, d + len) from the entrance.
        if d < r {
            let first = (d.max(0.0) / cell).floor() as usize;
            let last = (((d + len).min(r) / cell).ceil() as usize).min(params.bins);
            for c in occupancy.iter_mut().take(last).skip(first) {
                *c = true;
            }
        }
    }
    let avg_wait = if queue_len == 0 { 0.0 } else { wait_sum / queue_len as f64 };
    MovementStats { queue_len, avg_wait, occupancy }
}

/// Shared part of both observation vectors: `(l, w)` per movement, then the
/// occupancy maps, all normalized to `[0, 1]`.
pub fn macro_features(state: &SimState, params: &ObsParams) -> Vec<f64> {
    let spec = &state.spec;
    let stats: Vec<MovementStats> = MovementId::ALL.iter().map(|&mv| movement_stats(state, mv, params)).collect();
    let mut out = Vec::with_capacity(params.macro_len());
    for (mv, s) in MovementId::ALL.iter().zip(&stats) {
        let cap = spec.control_zone_radius / state.params.vehicle_length * spec.lanes_for(*mv).len() as f64;
        out.push((s.queue_len as f64 / cap).min(1.0));
        out.push((s.avg_wait / params.w_max).min(1.0));
    }
    for s in &stats {
        out.extend(s.occupancy.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    }
    out
}

fn controllable<'a>(state: &'a SimState, rv: VehicleId) -> Result<&'a VehicleState, ObsError> {
    let v = state.vehicle(rv).ok_or(ObsError::UnknownVehicle(rv))?;
    if !v.is_rv() {
        return Err(ObsError::NotRv(rv));
    }
    if v.phase != Phase::Approaching {
        return Err(ObsError::NotApproaching(rv));
    }
    Ok(v)
}

fn normalized_distance(state: &SimState, v: &VehicleState) -> f64 {
    let r = state.spec.control_zone_radius;
    ((state.spec.entrance_line() - v.pos) / r).clamp(0.0, 1.0)
}

pub fn high_level_obs(state: &SimState, rv: VehicleId, params: &ObsParams) -> Result<Vec<f64>, ObsError> {
    let macro_part = macro_features(state, params);
    high_level_obs_with(state, rv, &macro_part)
}

/// As [`high_level_obs`], reusing a precomputed macro part.
pub fn high_level_obs_with(state: &SimState, rv: VehicleId, macro_part: &[f64]) -> Result<Vec<f64>, ObsError> {
    let v = controllable(state, rv)?;
    let mut out = Vec::with_capacity(macro_part.len() + 1);
    out.extend_from_slice(macro_part);
    out.push(normalized_distance(state, v));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelObs {
    pub macro_part: Vec<f64>,
    pub d: f64,
    pub cl: f64,
    pub cr: f64,
}

impl LowLevelObs {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = self.macro_part.clone();
        out.extend([self.d, self.cl, self.cr]);
        out
    }
}

pub fn low_level_obs(state: &SimState, rv: VehicleId, params: &ObsParams) -> Result<LowLevelObs, ObsError> {
    let macro_part = macro_features(state, params);
    low_level_obs_with(state, rv, macro_part)
}

pub fn low_level_obs_with(state: &SimState, rv: VehicleId, macro_part: Vec<f64>) -> Result<LowLevelObs, ObsError> {
    let v = controllable(state, rv)?;
    let lanes = state.spec.lanes_per_approach;
    let detect = |lane: Option<usize>| -> f64 {
        match lane {
            Some(l) if l < lanes => {
                let hit = state.vehicles.iter().any(|o| {
                    o.id != v.id
                        && o.is_rv()
                        && o.movement.approach == v.movement.approach
                        && o.lane == l
                        && in_zone_approaching(&state.spec, o)
                });
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
            _ => 0.0,
        }
    };
    Ok(LowLevelObs {
        macro_part,
        d: normalized_distance(state, v),
        cl: detect(v.lane.checked_sub(1)),
        cr: detect(Some(v.lane + 1)),
    })
}

/// Negative sum of normalized waiting clocks over every vehicle in the zone.
pub fn step_reward(state: &SimState, params: &ObsParams) -> f64 {
    -state
        .vehicles
        .iter()
        .filter(|v| state.spec.in_control_zone(v))
        .map(|v| (v.wait_clock / params.w_max).min(1.0))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitSummary {
    pub avg_waiting_time: f64,
    pub vehicles: usize,
    /// No vehicle entered the control zone; the average is defined as 0.
    pub empty: bool,
}

/// Mean final waiting clock over vehicles that entered the control zone, read
/// from departures and end-of-run records.
pub fn avg_waiting_time(log: &EventLog) -> WaitSummary {
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in log.iter() {
        match e.kind {
            EventKind::Depart { wait_clock } | EventKind::HorizonEnd { wait_clock, .. } => {
                sum += wait_clock;
                n += 1;
            }
            _ => {}
        }
    }
    if n == 0 {
        WaitSummary { avg_waiting_time: 0.0, vehicles: 0, empty: true }
    } else {
        WaitSummary { avg_waiting_time: sum / n as f64, vehicles: n, empty: false }
    }
}

/// Final clocks per movement, in canonical movement order.
pub fn per_movement_waits(log: &EventLog) -> [f64; 8] {
    let mut sum = [0.0; 8];
    let mut n = [0usize; 8];
    for e in log.iter() {
        if let (EventKind::Depart { wait_clock } | EventKind::HorizonEnd { wait_clock, .. }, Some(mv)) = (&e.kind, e.movement) {
            sum[mv.index()] += wait_clock;
            n[mv.index()] += 1;
        }
    }
    std::array::from_fn(|i| if n[i] == 0 { 0.0 } else { sum[i] / n[i] as f64 })
}

/// Fraction of approach lanes with no robot vehicle approaching inside the
/// control zone.
pub fn unregulated_ratio(state: &SimState) -> f64 {
    let spec = &state.spec;
    let total = spec.lane_count();
    let mut regulated = vec![false; total];
    for v in state.vehicles.iter().filter(|v| v.is_rv() && in_zone_approaching(spec, v)) {
        regulated[spec.lane_index(v.lane_id())] = true;
    }
    regulated.iter().filter(|r| !**r).count() as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::test_support::{place, state_with};
    use crate::vehicle::VehicleKind;
    use proptest::prelude::*;

    fn p() -> ObsParams {
        ObsParams::default()
    }

    #[test]
    fn empty_zone_stats() {
        let s = state_with(vec![]);
        for mv in MovementId::ALL {
            let st = movement_stats(&s, mv, &p());
            assert_eq!((st.queue_len, st.avg_wait), (0, 0.0));
            assert!(st.occupancy.iter().all(|c| !c));
        }
    }

    #[test]
    fn two_stopped_vehicles() {
        let mut s = state_with(vec![]);
        let e = s.spec.entrance_line();
        let a = place(&mut s, VehicleKind::Hv, "E-C", 1, e - 1.0, 0.0);
        let b = place(&mut s, VehicleKind::Hv, "E-C", 1, e - 8.0, 0.0);
        s.vehicles.iter_mut().find(|v| v.id == a).unwrap().wait_clock = 3.0;
        s.vehicles.iter_mut().find(|v| v.id == b).unwrap().wait_clock = 5.0;
        let st = movement_stats(&s, "E-C".parse().unwrap(), &p());
        assert_eq!(st.queue_len, 2);
        assert_eq!(st.avg_wait, 4.0);
        // bodies cover d in [1,6) and [8,13): cells of 5 m
        assert_eq!(st.occupancy, vec![true, true, true, false, false, false, false, false, false, false]);
    }

    #[test]
    fn moving_vehicle_occupies_but_does_not_queue() {
        let mut s = state_with(vec![]);
        let e = s.spec.entrance_line();
        place(&mut s, VehicleKind::Hv, "N-L", 0, e - 22.0, 5.0);
        let st = movement_stats(&s, "N-L".parse().unwrap(), &p());
        assert_eq!((st.queue_len, st.avg_wait), (0, 0.0));
        assert!(st.occupancy[4] && st.occupancy[5]);
        assert_eq!(st.occupancy.iter().filter(|c| **c).count(), 2);
    }

    #[test]
    fn high_obs_distance_entry() {
        let mut s = state_with(vec![]);
        let e = s.spec.entrance_line();
        let far = place(&mut s, VehicleKind::Rv, "E-C", 1, e - 50.0, 5.0);
        let at = place(&mut s, VehicleKind::Rv, "W-C", 1, e, 0.0);
        let o = high_level_obs(&s, far, &p()).unwrap();
        assert_eq!(o.len(), p().high_len());
        assert_eq!(*o.last().unwrap(), 1.0);
        assert_eq!(*high_level_obs(&s, at, &p()).unwrap().last().unwrap(), 0.0);
    }

    #[test]
    fn high_obs_layout_matches_hand_assembly() {
        let mut s = state_with(vec![]);
        let e = s.spec.entrance_line();
        let q = place(&mut s, VehicleKind::Hv, "W-L", 0, e - 2.0, 0.0);
        s.vehicles.iter_mut().find(|v| v.id == q).unwrap().wait_clock = 60.0;
        let rv = place(&mut s, VehicleKind::Rv, "S-C", 1, e - 25.0, 5.0);
        let o = high_level_obs(&s, rv, &p()).unwrap();
        let mut expect = vec![0.0; 16];
        // W-L is the third movement; capacity 50/5 * 1 lane = 10
        expect[4] = 0.1;
        expect[5] = 0.5;
        let mut occ = vec![0.0; 80];
        // W-L body d in [2, 7): cells 0 and 1
        occ[20] = 1.0;
        occ[21] = 1.0;
        // S-C body d in [25, 30): cell 5 only
        occ[70 + 5] = 1.0;
        expect.extend(occ);
        expect.push(0.5);
        assert_eq!(o, expect);
    }

    #[test]
    fn neighbour_detection() {
        let mut s = SimState::new(
            IntersectionSpec::new(3, crate::geometry::LaneMode::Shared, 200.0, 20.0, 50.0).unwrap(),
            Default::default(),
        );
        let e = s.spec.entrance_line();
        let lone = place(&mut s, VehicleKind::Rv, "E-C", 1, e - 30.0, 5.0);
        let o = low_level_obs(&s, lone, &p()).unwrap();
        assert_eq!((o.cl, o.cr), (0.0, 0.0));
        place(&mut s, VehicleKind::Rv, "E-L", 0, e - 10.0, 5.0);
        let o = low_level_obs(&s, lone, &p()).unwrap();
        assert_eq!((o.cl, o.cr), (1.0, 0.0));
        let left = place(&mut s, VehicleKind::Rv, "E-C", 0, e - 40.0, 5.0);
        assert_eq!(low_level_obs(&s, left, &p()).unwrap().cl, 0.0);
    }

    #[test]
    fn obs_rejects_bad_targets() {
        let mut s = state_with(vec![]);
        let hv = place(&mut s, VehicleKind::Hv, "E-C", 1, 100.0, 5.0);
        let inside = place(&mut s, VehicleKind::Rv, "E-C", 1, 205.0, 5.0);
        assert_eq!(high_level_obs(&s, hv, &p()), Err(ObsError::NotRv(hv)));
        assert_eq!(high_level_obs(&s, inside, &p()), Err(ObsError::NotApproaching(inside)));
        assert_eq!(high_level_obs(&s, VehicleId(77), &p()), Err(ObsError::UnknownVehicle(VehicleId(77))));
    }

    #[test]
    fn reward_examples() {
        let mut s = state_with(vec![]);
        assert_eq!(step_reward(&s, &p()), 0.0);
        let e = s.spec.entrance_line();
        for (i, w) in [10.0, 20.0, 200.0].into_iter().enumerate() {
            let id = place(&mut s, VehicleKind::Hv, "E-C", 1, e - 1.0 - 7.0 * i as f64, 0.0);
            s.vehicles.iter_mut().find(|v| v.id == id).unwrap().wait_clock = w;
        }
        let expect = -(10.0 / 120.0 + 20.0 / 120.0 + 1.0);
        assert!((step_reward(&s, &p()) - expect).abs() < 1e-15);
        assert!((expect - -1.25).abs() < 1e-15);

        let mut s = state_with(vec![]);
        let id = place(&mut s, VehicleKind::Hv, "E-C", 1, e - 1.0, 0.0);
        s.vehicles[0].wait_clock = 60.0;
        let _ = id;
        assert_eq!(step_reward(&s, &p()), -0.5);
    }

    #[test]
    fn wait_average_from_log() {
        let log = EventLog::new();
        assert!(avg_waiting_time(&log).empty);
        let mut s = state_with(vec![]);
        for w in [4.0, 6.0] {
            s.log(EventKind::Depart { wait_clock: w }, None);
        }
        assert_eq!(avg_waiting_time(&s.event_log).avg_waiting_time, 5.0);
    }

    #[test]
    fn unregulated_examples() {
        let mut s = state_with(vec![]);
        assert_eq!(unregulated_ratio(&s), 1.0);
        let e = s.spec.entrance_line();
        for (mv, lane) in [("E-L", 0), ("W-C", 1), ("S-C", 1)] {
            place(&mut s, VehicleKind::Rv, mv, lane, e - 10.0, 3.0);
        }
        assert_eq!(unregulated_ratio(&s), 0.625);
        for mv in MovementId::ALL {
            let lane = s.spec.lanes_for(mv)[0];
            place(&mut s, VehicleKind::Rv, &mv.to_string(), lane, e - 30.0, 3.0);
        }
        assert_eq!(unregulated_ratio(&s), 0.0);
    }

    proptest! {
        #[test]
        fn observation_invariants(
            cars in proptest::collection::vec((0usize..8, 0.0f64..200.0, 0.0f64..14.0, 0.0f64..300.0, any::<bool>()), 1..30),
            perm_seed in any::<u64>(),
        ) {
            let mut s = state_with(vec![]);
            let mut rvs = Vec::new();
            for (m, pos, v, w, rv) in &cars {
                let mv = MovementId::ALL[*m];
                let lane = s.spec.lanes_for(mv)[0];
                let kind = if *rv { VehicleKind::Rv } else { VehicleKind::Hv };
                let id = s.insert_vehicle(kind, mv, lane, *pos, if *v < 0.05 { 0.0 } else { *v });
                s.vehicles.last_mut().unwrap().wait_clock = *w;
                if *rv { rvs.push(id); }
            }
            let params = p();
            let r = step_reward(&s, &params);
            prop_assert!(r <= 0.0);
            for &rv in &rvs {
                let h = high_level_obs(&s, rv, &params).unwrap();
                let l = low_level_obs(&s, rv, &params).unwrap();
                prop_assert_eq!(h.len(), params.high_len());
                prop_assert_eq!(l.to_vec().len(), params.low_len());
                prop_assert!(h.iter().all(|x| (0.0..=1.0).contains(x)));
                prop_assert_eq!(&h[..params.macro_len()], &l.macro_part[..]);
            }
            // permutation invariance of the averages
            let before: Vec<_> = MovementId::ALL.iter().map(|&m| movement_stats(&s, m, &params)).collect();
            let n = s.vehicles.len();
            let k = (perm_seed as usize) % n;
            s.vehicles.rotate_left(k);
            let after: Vec<_> = MovementId::ALL.iter().map(|&m| movement_stats(&s, m, &params)).collect();
            for (b, a) in before.iter().zip(&after) {
                prop_assert_eq!(b.queue_len, a.queue_len);
                prop_assert!((b.avg_wait - a.avg_wait).abs() < 1e-12);
                prop_assert_eq!(&b.occupancy, &a.occupancy);
            }
        }
    }
}
