//! Front-to-back kinematic resolution with the collision guard.
//!
//! Vehicles are integrated leaders first, so each follower is checked against
//! its leaders' post-step positions. A proposal after which the follower
//! could no longer stop behind its leader (both braking at the emergency
//! rate) is replaced by emergency braking; if even that is not enough (a leader
//! that itself had to stop abruptly), the follower's post-step speed is cut so
//! the gap ends at exactly zero.

use std::collections::BTreeMap;

use crate::vehicle::VehicleId;

use super::{SimState, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum GuardOutcome {
    None,
    Brake,
    Clamp,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Motion {
    pub accel: f64,
    pub speed: f64,
    pub pos: f64,
    pub guard: GuardOutcome,
    pub speed_clamped: Option<f64>,
    pub hold_clamped: bool,
}

fn integrate(pos: f64, v: f64, a: f64, dt: f64) -> (f64, f64, Option<f64>) {
    let raw = v + a * dt;
    let (v1, clamped) = if raw < 0.0 { (0.0, (v > 0.0).then_some(raw)) } else { (raw, None) };
    (v1, pos + v1 * dt, clamped)
}

pub(crate) fn resolve(state: &SimState, topo: &Topology, proposed: &[f64], gate: &[bool]) -> Vec<Motion> {
    let p = &state.params;
    let dt = p.dt;
    let len = p.vehicle_length;
    let entrance = state.spec.entrance_line();
    let mut out: Vec<Option<Motion>> = vec![None; state.vehicles.len()];

    for &i in &topo.order {
        let v = &state.vehicles[i];
        // Leaders are resolved before their followers: (rear bumper, speed).
        let leaders: Vec<(f64, f64)> = topo.leaders[i]
            .iter()
            .map(|&l| {
                let m = out[l].expect("leader resolved first");
                (m.pos - len, m.speed)
            })
            .collect();
        let limit = leaders.iter().map(|l| l.0).min_by(f64::total_cmp);
        // Safe if the follower could still stop behind each leader were both
        // to brake at the emergency rate from the post-step state.
        let safe = |pos: f64, speed: f64| {
            leaders.iter().all(|&(rear, vl)| rear - pos >= ((speed * speed - vl * vl) / (2.0 * p.b_emergency)).max(0.0))
        };
        let mut a = proposed[i];
        let (mut speed, mut pos, mut speed_clamped) = integrate(v.pos, v.speed, a, dt);
        let mut guard = GuardOutcome::None;
        if !safe(pos, speed) && a > -p.b_emergency {
            guard = GuardOutcome::Brake;
            a = -p.b_emergency;
            (speed, pos, speed_clamped) = integrate(v.pos, v.speed, a, dt);
        }
        if let Some(limit) = limit {
            if pos > limit {
                guard = GuardOutcome::Clamp;
                speed = ((limit - v.pos) / dt).max(0.0);
                pos = (v.pos + speed * dt).min(limit).max(v.pos);
                speed_clamped = None;
            }
        }
        let mut hold_clamped = false;
        if gate[i] && pos > entrance {
            hold_clamped = true;
            pos = entrance.max(v.pos);
            speed = 0.0;
        }
        if guard == GuardOutcome::Clamp || hold_clamped {
            a = (speed - v.speed) / dt;
        } else if speed_clamped.is_some() || (speed == 0.0 && a < 0.0) {
            a = (speed - v.speed) / dt;
        }
        out[i] = Some(Motion { accel: a, speed, pos, guard, speed_clamped, hold_clamped });
    }
    out.into_iter().map(|m| m.expect("every vehicle is in the processing order")).collect()
}

/// Accelerations after the collision guard, for the given proposals.
/// Vehicles without a proposal keep zero acceleration as their proposal.
pub fn emergency_guard(state: &SimState, proposed: &BTreeMap<VehicleId, f64>) -> BTreeMap<VehicleId, f64> {
    let topo = state.topology();
    let prop: Vec<f64> = state.vehicles.iter().map(|v| proposed.get(&v.id).copied().unwrap_or(0.0)).collect();
    let gate = vec![false; state.vehicles.len()];
    resolve(state, &topo, &prop, &gate)
        .into_iter()
        .zip(&state.vehicles)
        .map(|(m, v)| (v.id, m.accel))
        .collect()
}
