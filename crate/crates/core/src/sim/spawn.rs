//! Poisson arrivals per movement with a FIFO backlog for blocked insertions.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::movement::MovementId;
use crate::vehicle::{Phase, VehicleKind};

use super::{EventKind, SimState};

#[derive(Debug, Clone, PartialEq)]
pub struct SpawnProcess {
    /// Vehicles per hour, indexed by [`MovementId::index`].
    pub rate_per_movement: [f64; 8],
    pub rv_penetration: f64,
}

/// Stateful arrival process: owns its random stream and backlog.
#[derive(Debug, Clone)]
pub struct Spawner {
    pub process: SpawnProcess,
    rng: ChaCha8Rng,
    backlog: [VecDeque<VehicleKind>; 8],
}

impl Spawner {
    pub fn new(process: SpawnProcess, rng: ChaCha8Rng) -> Self {
        Spawner { process, rng, backlog: Default::default() }
    }

    pub fn backlog_len(&self) -> usize {
        self.backlog.iter().map(VecDeque::len).sum()
    }

    /// Draws this step's arrivals and inserts as many queued vehicles as fit.
    pub fn spawn(&mut self, state: &mut SimState) {
        let dt = state.params.dt;
        for mv in MovementId::ALL {
            let rate = self.process.rate_per_movement[mv.index()];
            if rate > 0.0 {
                let lambda = rate * dt / 3600.0;
                let n = Poisson::new(lambda).expect("positive finite rate").sample(&mut self.rng) as u64;
                for _ in 0..n {
                    let u: f64 = self.rng.random();
                    let kind = if u < self.process.rv_penetration { VehicleKind::Rv } else { VehicleKind::Hv };
                    self.backlog[mv.index()].push_back(kind);
                }
            }
            while let Some(&kind) = self.backlog[mv.index()].front() {
                if try_insert(state, mv, kind) {
                    self.backlog[mv.index()].pop_front();
                } else {
                    break;
                }
            }
        }
    }
}

/// Inserts at the lane start of the emptiest eligible lane if the gap allows.
fn try_insert(state: &mut SimState, mv: MovementId, kind: VehicleKind) -> bool {
    let p = state.params;
    let mut best: Option<(usize, f64, f64)> = None;
    for lane in state.spec.lanes_for(mv) {
        let rear = state
            .vehicles
            .iter()
            .filter(|v| v.phase == Phase::Approaching && v.movement.approach == mv.approach && v.lane == lane)
            .min_by(|a, b| a.pos.total_cmp(&b.pos));
        let (gap, vl) = match rear {
            Some(r) => (r.pos - p.vehicle_length, r.speed),
            None => (f64::INFINITY, p.idm.v0),
        };
        if best.is_none_or(|(_, g, _)| gap > g) {
            best = Some((lane, gap, vl));
        }
    }
    let Some((lane, gap, vl)) = best else { return false };
    if gap < p.idm.s0 + p.vehicle_length {
        return false;
    }
    let speed = if gap.is_infinite() {
        p.idm.v0
    } else {
        p.idm.v0.min((vl * vl + 2.0 * p.idm.b_comf * (gap - p.idm.s0).max(0.0)).sqrt())
    };
    let id = state.insert_vehicle(kind, mv, lane, 0.0, speed);
    let i = state.index_of(id).expect("just inserted");
    state.log_idx(EventKind::Spawn { kind, speed }, i);
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::IntersectionSpec;
    use crate::sim::SimParams;
    use rand::SeedableRng;

    fn run(rates: [f64; 8], pen: f64, steps: usize, seed: u64) -> SimState {
        let mut s = SimState::new(IntersectionSpec::default(), SimParams::default());
        let mut sp = Spawner::new(SpawnProcess { rate_per_movement: rates, rv_penetration: pen }, ChaCha8Rng::seed_from_u64(seed));
        for _ in 0..steps {
            sp.spawn(&mut s);
            s.step_free();
        }
        s
    }

    #[test]
    fn zero_rates_never_spawn() {
        let s = run([0.0; 8], 0.5, 2000, 1);
        assert!(s.event_log.is_empty());
    }

    #[test]
    fn full_penetration_spawns_only_rvs() {
        let s = run([300.0; 8], 1.0, 3000, 2);
        let spawns: Vec<_> = s.event_log.iter().filter(|e| matches!(e.kind, EventKind::Spawn { .. })).collect();
        assert!(!spawns.is_empty());
        assert!(spawns.iter().all(|e| matches!(e.kind, EventKind::Spawn { kind: VehicleKind::Rv, .. })));
    }

    #[test]
    fn arrival_count_matches_poisson_mean() {
        // 600 veh/h for 3600 s: mean 600, sd sqrt(600).
        let mut rates = [0.0; 8];
        rates[1] = 600.0;
        let mut s = SimState::new(IntersectionSpec::default(), SimParams::default());
        let mut sp = Spawner::new(SpawnProcess { rate_per_movement: rates, rv_penetration: 0.0 }, ChaCha8Rng::seed_from_u64(7));
        for _ in 0..36_000 {
            sp.spawn(&mut s);
            s.step_free();
        }
        let arrivals = s.event_log.count(|k| matches!(k, EventKind::Spawn { .. })) + sp.backlog_len();
        let sd = 600f64.sqrt();
        assert!((arrivals as f64 - 600.0).abs() < 3.0 * sd, "{arrivals}");
    }
}
