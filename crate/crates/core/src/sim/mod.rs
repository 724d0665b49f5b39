//! Fixed-step microscopic simulation of one intersection.

pub mod conflict;
pub mod events;
mod guard;
pub mod lane_change;
pub mod spawn;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::IntersectionSpec;
use crate::idm::{idm_accel, IdmError, IdmParams};
use crate::kinematics::{capped_accel, stop_line_speed_cap};
use crate::movement::{conflicts, MovementId};
use crate::vehicle::{Phase, VehicleId, VehicleKind, VehicleState};

pub use conflict::{conflict_manager, HoldDecision};
pub use events::{DecisionLevel, Event, EventKind, EventLog};
pub use guard::emergency_guard;
pub use lane_change::{apply_lane_change, LaneChangeRejection};
pub use spawn::{SpawnProcess, Spawner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LaneChange {
    Left,
    Keep,
    Right,
}

/// Command for one robot vehicle for one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvCommand {
    pub accel: f64,
    pub lane_change: LaneChange,
    /// The vehicle was advised to stop; it is never granted entry while set.
    pub stop_at_entrance: bool,
}

impl RvCommand {
    pub fn new(accel: f64, lane_change: LaneChange) -> Self {
        RvCommand { accel, lane_change, stop_at_entrance: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub dt: f64,
    pub vehicle_length: f64,
    pub b_emergency: f64,
    /// Speed below which a vehicle counts as stationary.
    pub v_stop: f64,
    pub a_max_rv: f64,
    /// Seconds between two lane changes of the same vehicle.
    pub lc_cooldown: f64,
    /// Extra look-ahead (m) of the entrance arbitration beyond braking distance.
    pub hold_horizon: f64,
    pub idm: IdmParams,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 0.1,
            vehicle_length: 5.0,
            b_emergency: 9.0,
            v_stop: 0.1,
            a_max_rv: 2.6,
            lc_cooldown: 2.0,
            hold_horizon: 5.0,
            idm: IdmParams::default(),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation parameter: {0}")]
    InvalidParam(&'static str),
    #[error(transparent)]
    Idm(#[from] IdmError),
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !(pos(self.dt) && self.dt <= 1.0) {
            return Err(SimError::InvalidParam("dt must be in (0, 1]"));
        }
        if !pos(self.vehicle_length) {
            return Err(SimError::InvalidParam("vehicle_length must be positive"));
        }
        if !pos(self.b_emergency) || self.b_emergency < self.idm.b_comf {
            return Err(SimError::InvalidParam("b_emergency must be positive and at least idm.b_comf"));
        }
        if !pos(self.v_stop) {
            return Err(SimError::InvalidParam("v_stop must be positive"));
        }
        if !pos(self.a_max_rv) {
            return Err(SimError::InvalidParam("a_max_rv must be positive"));
        }
        if !(self.lc_cooldown.is_finite() && self.lc_cooldown >= 0.0) {
            return Err(SimError::InvalidParam("lc_cooldown must be non-negative"));
        }
        if !(self.hold_horizon.is_finite() && self.hold_horizon >= 0.0) {
            return Err(SimError::InvalidParam("hold_horizon must be non-negative"));
        }
        self.idm.validate()?;
        Ok(())
    }

    /// Deceleration used for planned stops at a line.
    pub fn stop_decel(&self) -> f64 {
        self.idm.b_comf.min(self.b_emergency / 2.0)
    }
}

/// Neighbour structure of the current vehicle set.
#[derive(Debug, Clone, Default)]
pub(crate) struct Topology {
    /// Every vehicle appears after all of its leaders.
    pub order: Vec<usize>,
    /// Approaching vehicles, lane by lane, front to back.
    pub approach_order: Vec<usize>,
    /// Nearest approaching vehicle ahead on the same lane.
    pub lane_leader: Vec<Option<usize>>,
    /// All vehicles a follower must not run into.
    pub leaders: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct SimState {
    pub time: f64,
    pub step_count: u64,
    /// Live vehicles in insertion (id) order.
    pub vehicles: Vec<VehicleState>,
    pub spec: IntersectionSpec,
    pub params: SimParams,
    pub event_log: EventLog,
    pub departures: u64,
    pub last_departure_step: u64,
    pub(crate) granted: BTreeSet<VehicleId>,
    pub(crate) held: BTreeSet<VehicleId>,
    next_id: u64,
}

impl SimState {
    pub fn new(spec: IntersectionSpec, params: SimParams) -> Self {
        SimState {
            time: 0.0,
            step_count: 0,
            vehicles: Vec::new(),
            spec,
            params,
            event_log: EventLog::new(),
            departures: 0,
            last_departure_step: 0,
            granted: BTreeSet::new(),
            held: BTreeSet::new(),
            next_id: 0,
        }
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.index_of(id).map(|i| &self.vehicles[i])
    }

    pub(crate) fn index_of(&self, id: VehicleId) -> Option<usize> {
        self.vehicles.binary_search_by_key(&id, |v| v.id).ok()
    }

    /// Vehicles currently held at the entrance line.
    pub fn held(&self) -> &BTreeSet<VehicleId> {
        &self.held
    }

    pub(crate) fn log(&mut self, kind: EventKind, v: Option<&VehicleState>) {
        let ev = Event {
            time: self.time,
            kind,
            vehicle: v.map(|v| v.id),
            lane: v.map(|v| v.lane),
            movement: v.map(|v| v.movement),
        };
        self.event_log.push(ev);
    }

    pub(crate) fn log_idx(&mut self, kind: EventKind, i: usize) {
        let v = self.vehicles[i].clone();
        self.log(kind, Some(&v));
    }

    /// Adds a vehicle directly, bypassing the arrival process. Vehicles beyond
    /// the entrance line start inside the box.
    pub fn insert_vehicle(&mut self, kind: VehicleKind, movement: MovementId, lane: usize, pos: f64, speed: f64) -> VehicleId {
        let id = VehicleId(self.next_id);
        self.next_id += 1;
        let mut v = VehicleState::new(id, kind, movement, lane, pos, speed);
        if pos > self.spec.entrance_line() {
            v.phase = Phase::InsideBox;
        }
        v.entered_zone = self.spec.in_control_zone(&v);
        self.vehicles.push(v);
        id
    }

    pub(crate) fn topology(&self) -> Topology {
        let n = self.vehicles.len();
        let lanes = self.spec.lanes_per_approach;
        let entrance = self.spec.entrance_line();
        let len = self.params.vehicle_length;
        let mut by_lane: Vec<Vec<usize>> = vec![Vec::new(); 4 * lanes];
        let mut by_path: BTreeMap<(usize, usize, usize), Vec<usize>> = BTreeMap::new();
        for (i, v) in self.vehicles.iter().enumerate() {
            let key = v.movement.approach.index() * lanes + v.lane;
            match v.phase {
                Phase::Approaching => by_lane[key].push(i),
                Phase::InsideBox => by_path.entry((v.movement.approach.index(), v.lane, v.movement.index())).or_default().push(i),
                Phase::Departed => {}
            }
        }
        let front_first = |list: &mut Vec<usize>| {
            list.sort_by(|&a, &b| {
                let (va, vb) = (&self.vehicles[a], &self.vehicles[b]);
                vb.pos.total_cmp(&va.pos).then(va.id.cmp(&vb.id))
            })
        };
        let mut topo = Topology { lane_leader: vec![None; n], leaders: vec![Vec::new(); n], ..Default::default() };
        for list in by_path.values_mut() {
            front_first(list);
            for w in list.windows(2) {
                topo.leaders[w[1]].push(w[0]);
            }
            topo.order.extend_from_slice(list);
        }
        for (key, list) in by_lane.iter_mut().enumerate() {
            front_first(list);
            if let Some(&front) = list.first() {
                let (a, lane) = (key / lanes, key % lanes);
                let mv = self.vehicles[front].movement;
                for (&(pa, pl, _), path) in &by_path {
                    if pa != a || pl != lane {
                        continue;
                    }
                    let rear = *path.last().expect("paths are non-empty");
                    let rv = &self.vehicles[rear];
                    if rv.movement == mv || rv.pos - len < entrance {
                        topo.leaders[front].push(rear);
                    }
                }
            }
            for w in list.windows(2) {
                topo.lane_leader[w[1]] = Some(w[0]);
                topo.leaders[w[1]].push(w[0]);
            }
            topo.approach_order.extend_from_slice(list);
        }
        topo.order.extend_from_slice(&topo.approach_order);
        topo
    }

    /// Bumper gaps of every (follower, leader) pair sharing a lane or an
    /// interior path.
    pub fn same_path_gaps(&self) -> Vec<(VehicleId, VehicleId, f64)> {
        let topo = self.topology();
        let len = self.params.vehicle_length;
        let mut out = Vec::new();
        for (f, leaders) in topo.leaders.iter().enumerate() {
            for &l in leaders {
                let (fv, lv) = (&self.vehicles[f], &self.vehicles[l]);
                out.push((fv.id, lv.id, lv.pos - len - fv.pos));
            }
        }
        out
    }

    pub fn min_same_path_gap(&self) -> Option<f64> {
        self.same_path_gaps().into_iter().map(|g| g.2).min_by(f64::total_cmp)
    }

    /// Pairs of vehicles inside the box whose movements conflict.
    pub fn conflicting_inside_pairs(&self) -> Vec<(VehicleId, VehicleId)> {
        let inside: Vec<_> = self.vehicles.iter().filter(|v| v.phase == Phase::InsideBox).collect();
        let mut out = Vec::new();
        for (i, a) in inside.iter().enumerate() {
            for b in &inside[i + 1..] {
                if conflicts(a.movement, b.movement) {
                    out.push((a.id, b.id));
                }
            }
        }
        out
    }

    /// Acceleration a vehicle would choose by IDM toward its binding leader.
    fn idm_for(&self, i: usize, topo: &Topology) -> (f64, bool) {
        let v = &self.vehicles[i];
        let p = &self.params;
        let lead = topo.leaders[i]
            .iter()
            .map(|&l| (self.vehicles[l].pos - p.vehicle_length - v.pos, self.vehicles[l].speed))
            .min_by(|a, b| a.0.total_cmp(&b.0));
        match lead {
            None => (idm_accel(v.speed, f64::INFINITY, 0.0, &p.idm, p.b_emergency).unwrap_or(-p.b_emergency), false),
            // A touching leader (gap exactly 0 after a guard clamp) means full braking.
            Some((gap, vl)) => (idm_accel(v.speed, gap, vl, &p.idm, p.b_emergency).unwrap_or(-p.b_emergency), true),
        }
    }

    /// Advances the simulation by one step without commands or outside holds.
    pub fn step_free(&mut self) -> usize {
        self.step(&BTreeMap::new(), &BTreeSet::new())
    }

    /// Advances the simulation by `params.dt`. Returns the number of
    /// vehicles that left the box.
    pub fn step(&mut self, commands: &BTreeMap<VehicleId, RvCommand>, external_holds: &BTreeSet<VehicleId>) -> usize {
        let dt = self.params.dt;
        let p = self.params;

        // Commands: validate, then lateral moves.
        let mut accepted: BTreeMap<VehicleId, RvCommand> = BTreeMap::new();
        for (&id, cmd) in commands {
            let ok = self
                .vehicle(id)
                .map(|v| v.is_rv() && v.phase == Phase::Approaching && cmd.accel.is_finite())
                .unwrap_or(false);
            if !ok {
                let v = self.vehicle(id).cloned();
                self.log(EventKind::CommandIgnored, v.as_ref());
                if v.is_none() {
                    if let Some(last) = self.event_log_last_mut() {
                        last.vehicle = Some(id);
                    }
                }
                continue;
            }
            let mut cmd = *cmd;
            cmd.accel = cmd.accel.clamp(-p.b_emergency, p.a_max_rv);
            accepted.insert(id, cmd);
            if cmd.lane_change != LaneChange::Keep {
                let _ = apply_lane_change(self, id, cmd.lane_change);
            }
        }

        // Entrance arbitration.
        let yielding: BTreeSet<VehicleId> =
            accepted.iter().filter(|(_, c)| c.stop_at_entrance).map(|(id, _)| *id).collect();
        let decision = conflict::decide(self, external_holds, &yielding);
        for i in 0..self.vehicles.len() {
            let id = self.vehicles[i].id;
            if decision.held.contains(&id) && !self.held.contains(&id) {
                self.log_idx(EventKind::HoldOnset, i);
            }
        }

        // Longitudinal proposals.
        let topo = self.topology();
        let entrance = self.spec.entrance_line();
        let mut proposed = vec![0.0; self.vehicles.len()];
        let mut gate = vec![false; self.vehicles.len()];
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            let (idm, has_leader) = self.idm_for(i, &topo);
            let mut a = match accepted.get(&v.id) {
                Some(cmd) => {
                    let mut a = if has_leader { cmd.accel.min(idm) } else { cmd.accel };
                    a = a.min((p.idm.v0 - v.speed) / dt);
                    a
                }
                None => idm,
            };
            if v.phase == Phase::Approaching && !decision.granted.contains(&v.id) {
                gate[i] = true;
                if decision.held.contains(&v.id) || yielding.contains(&v.id) {
                    let cap = stop_line_speed_cap(entrance - v.pos, dt, p.stop_decel());
                    a = capped_accel(a, v.speed, cap, dt, p.b_emergency);
                }
            }
            proposed[i] = a;
        }

        let motions = guard::resolve(self, &topo, &proposed, &gate);

        // Apply, then log what the resolver overrode.
        for (i, m) in motions.iter().enumerate() {
            match m.guard {
                guard::GuardOutcome::None => {}
                guard::GuardOutcome::Brake => {
                    self.log_idx(EventKind::Guard { proposed: proposed[i], applied: m.accel }, i)
                }
                guard::GuardOutcome::Clamp => self.log_idx(EventKind::GuardClamp { applied: m.accel }, i),
            }
            if let Some(unclamped) = m.speed_clamped {
                self.log_idx(EventKind::SpeedClamp { unclamped }, i);
            }
            if m.hold_clamped {
                self.log_idx(EventKind::HoldClamp, i);
            }
            let v = &mut self.vehicles[i];
            v.accel = m.accel;
            v.speed = m.speed;
            v.pos = m.pos;
            if v.lc_cooldown > 0.0 {
                v.lc_cooldown -= dt;
                if v.lc_cooldown < 1e-9 {
                    v.lc_cooldown = 0.0;
                }
            }
        }

        self.step_count += 1;
        self.time = self.step_count as f64 * dt;

        // Phase transitions, zone entry and waiting clocks on the new state.
        let exit = self.spec.exit_line();
        let mut departed = Vec::new();
        for i in 0..self.vehicles.len() {
            let v = &mut self.vehicles[i];
            let mut events = Vec::new();
            if v.phase == Phase::Approaching && v.pos > entrance {
                v.phase = Phase::InsideBox;
                events.push(EventKind::BoxEnter);
            }
            if v.phase == Phase::InsideBox && v.pos >= exit {
                v.phase = Phase::Departed;
            }
            let in_zone = self.spec.in_control_zone(v);
            if in_zone && !v.entered_zone {
                v.entered_zone = true;
                events.insert(0, EventKind::ZoneEnter);
            }
            if in_zone && v.speed < p.v_stop {
                v.wait_steps += 1;
                v.wait_clock = v.wait_steps as f64 * dt;
            }
            if v.phase == Phase::Departed {
                events.push(EventKind::Depart { wait_clock: v.wait_clock });
                departed.push(v.id);
            }
            for e in events {
                self.log_idx(e, i);
            }
        }
        self.vehicles.retain(|v| v.phase != Phase::Departed);
        if !departed.is_empty() {
            self.departures += departed.len() as u64;
            self.last_departure_step = self.step_count;
        }
        let live = |id: &VehicleId| self.vehicles.binary_search_by_key(id, |v| v.id).ok();
        let granted: BTreeSet<_> = decision.granted.into_iter().filter(|id| live(id).is_some()).collect();
        let held: BTreeSet<_> = decision
            .held
            .into_iter()
            .filter(|id| live(id).is_some_and(|i| self.vehicles[i].phase == Phase::Approaching))
            .collect();
        self.granted = granted;
        self.held = held;
        departed.len()
    }

    fn event_log_last_mut(&mut self) -> Option<&mut Event> {
        self.event_log.last_mut()
    }

    /// Records the final clock of every vehicle still present. Call once at
    /// the end of a run.
    pub fn finish(&mut self) {
        for i in 0..self.vehicles.len() {
            let v = &self.vehicles[i];
            if v.entered_zone {
                let kind = EventKind::HorizonEnd { wait_clock: v.wait_clock, in_zone: self.spec.in_control_zone(v) };
                self.log_idx(kind, i);
            }
        }
    }
}
