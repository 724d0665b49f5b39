//! Episode runner: spawns traffic, queries the configured controller for
//! every controllable robot vehicle, and advances the simulation.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{hl_only_act, tl_control, HlOnlyConfig, SignalPlan};
use crate::geometry::IntersectionSpec;
use crate::observe::{high_level_obs_with, low_level_obs_with, macro_features, step_reward, ObsParams};
use crate::policy::{
    compose, high_level_act, low_level_act, safety_filter, Decision, PolicyError, PolicyParams, RawLowAction, SafetyBands,
};
use crate::sim::{DecisionLevel, EventKind, RvCommand, SimParams, SimState, SpawnProcess, Spawner};
use crate::vehicle::{Phase, VehicleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Hierarchical,
    HlOnly,
    Tl,
    Random,
    None,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::Hierarchical => "hierarchical",
            ControllerKind::HlOnly => "hl_only",
            ControllerKind::Tl => "tl",
            ControllerKind::Random => "random",
            ControllerKind::None => "none",
        }
    }

    pub fn needs_policy(self) -> bool {
        matches!(self, ControllerKind::Hierarchical | ControllerKind::HlOnly)
    }

    pub fn control(self) -> Control {
        let (high, low, signal) = match self {
            ControllerKind::Hierarchical => (HighSource::Policy, LowSource::Policy, false),
            ControllerKind::HlOnly => (HighSource::Policy, LowSource::HoldAtEntrance, false),
            ControllerKind::Random => (HighSource::Random, LowSource::Random, false),
            ControllerKind::Tl => (HighSource::None, LowSource::Random, true),
            ControllerKind::None => (HighSource::None, LowSource::Random, false),
        };
        Control { high, low, signal, deterministic_high: false, deterministic_low: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HighSource {
    Policy,
    Random,
    /// Robot vehicles are not commanded at all and drive like humans.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowSource {
    Policy,
    /// Brake to a stop at the entrance line, never change lanes.
    HoldAtEntrance,
    /// Uniform raw actions.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Control {
    pub high: HighSource,
    pub low: LowSource,
    /// Hold red movements with the fixed-time plan.
    pub signal: bool,
    pub deterministic_high: bool,
    pub deterministic_low: bool,
}

/// Everything needed to build an episode, independent of the seed.
#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub spec: IntersectionSpec,
    pub sim: SimParams,
    pub obs: ObsParams,
    pub bands: SafetyBands,
    pub plan: SignalPlan,
    pub hl_only: HlOnlyConfig,
    /// Vehicles per hour per movement, canonical order.
    pub demand: [f64; 8],
    pub rv_penetration: f64,
    /// Seconds between high-level re-decisions.
    pub high_period: f64,
    /// Seconds without departures (with vehicles waiting) that count as gridlock.
    pub gridlock_after: f64,
}

impl EnvConfig {
    pub fn high_every(&self) -> u64 {
        ((self.high_period / self.sim.dt).round() as u64).max(1)
    }

    pub fn gridlock_steps(&self) -> u64 {
        (self.gridlock_after / self.sim.dt).round() as u64
    }
}

#[derive(Debug, Clone)]
pub struct HighRecord {
    pub vehicle: VehicleId,
    pub obs: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct LowRecord {
    pub vehicle: VehicleId,
    pub obs: Vec<f64>,
    /// Pre-squash Gaussian sample.
    pub u: [f64; 2],
    pub log_prob: f64,
}

#[derive(Debug, Clone, Default)]
pub struct StepInfo {
    pub high: Vec<HighRecord>,
    pub low: Vec<LowRecord>,
    /// Agents that stopped being controllable during this step.
    pub exited: Vec<VehicleId>,
    pub departures: usize,
}

#[derive(Debug, Clone, Copy)]
struct Agent {
    decision: Decision,
}

pub struct Env<'a> {
    pub cfg: &'a EnvConfig,
    pub control: Control,
    pub policy: Option<&'a PolicyParams>,
    pub state: SimState,
    spawner: Spawner,
    rng: ChaCha8Rng,
    agents: BTreeMap<VehicleId, Agent>,
    /// Record observations of decisions for training.
    pub record: bool,
    pub gridlock_at: Option<f64>,
}

/// Independent random streams derived from one seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

const SPAWN_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;

impl<'a> Env<'a> {
    pub fn new(cfg: &'a EnvConfig, control: Control, policy: Option<&'a PolicyParams>, seed: u64) -> Self {
        let process = SpawnProcess { rate_per_movement: cfg.demand, rv_penetration: cfg.rv_penetration };
        Env {
            cfg,
            control,
            policy,
            state: SimState::new(cfg.spec.clone(), cfg.sim),
            spawner: Spawner::new(process, rng_stream(seed, SPAWN_STREAM)),
            rng: rng_stream(seed, POLICY_STREAM),
            agents: BTreeMap::new(),
            record: false,
            gridlock_at: None,
        }
    }

    pub fn decision_of(&self, id: VehicleId) -> Option<Decision> {
        self.agents.get(&id).map(|a| a.decision)
    }

    fn controllable(&self) -> Vec<VehicleId> {
        self.state
            .vehicles
            .iter()
            .filter(|v| v.is_rv() && v.phase == Phase::Approaching && self.state.spec.in_control_zone(v))
            .map(|v| v.id)
            .collect()
    }

    fn policy(&self) -> &'a PolicyParams {
        self.policy.expect("controller needs policy parameters")
    }

    /// One simulation step including arrivals and control.
    pub fn step(&mut self) -> Result<StepInfo, PolicyError> {
        let mut info = StepInfo::default();
        self.spawner.spawn(&mut self.state);

        let mut commands = BTreeMap::new();
        if self.control.high != HighSource::None {
            let ids = self.controllable();
            let needs_obs = self.control.high == HighSource::Policy || self.control.low == LowSource::Policy;
            let macro_part = if needs_obs && !ids.is_empty() { macro_features(&self.state, &self.cfg.obs) } else { Vec::new() };
            let redecide_all = self.state.step_count % self.cfg.high_every() == 0;
            for id in ids {
                let cmd = self.control_one(id, redecide_all, &macro_part, &mut info)?;
                commands.insert(id, cmd);
            }
        }
        let holds = if self.control.signal { tl_control(&self.state, &self.cfg.plan) } else { BTreeSet::new() };
        info.departures = self.state.step(&commands, &holds);

        let still: BTreeSet<VehicleId> = self.controllable().into_iter().collect();
        let gone: Vec<VehicleId> = self.agents.keys().filter(|id| !still.contains(id)).copied().collect();
        for id in gone {
            self.agents.remove(&id);
            info.exited.push(id);
        }

        let waiting = self.state.vehicles.iter().any(|v| self.state.spec.in_control_zone(v));
        if self.gridlock_at.is_none()
            && waiting
            && self.state.step_count.saturating_sub(self.state.last_departure_step) >= self.cfg.gridlock_steps()
        {
            self.gridlock_at = Some(self.state.time);
            self.state.log(EventKind::Gridlock, None);
        }
        Ok(info)
    }

    fn control_one(
        &mut self,
        id: VehicleId,
        redecide_all: bool,
        macro_part: &[f64],
        info: &mut StepInfo,
    ) -> Result<RvCommand, PolicyError> {
        let p = self.cfg.sim;
        let entrance = self.state.spec.entrance_line();
        let v = self.state.vehicle(id).expect("controllable vehicle exists").clone();

        let mut decision = match self.agents.get(&id) {
            Some(a) if !redecide_all => a.decision,
            _ => {
                let (d, action_label) = match self.control.high {
                    HighSource::Policy => {
                        let obs = high_level_obs_with(&self.state, id, macro_part).expect("controllable RV");
                        let (d, lp) = high_level_act(&obs, self.policy(), &mut self.rng, self.control.deterministic_high)?;
                        if self.record {
                            info.high.push(HighRecord { vehicle: id, obs, action: d.index(), log_prob: lp });
                        }
                        (d, d.as_str())
                    }
                    HighSource::Random => {
                        let d = if self.rng.random::<bool>() { Decision::Go } else { Decision::Stop };
                        (d, d.as_str())
                    }
                    HighSource::None => unreachable!("uncontrolled vehicles are skipped"),
                };
                self.state.log(EventKind::Decision { level: DecisionLevel::High, action: action_label.into() }, Some(&v));
                d
            }
        };
        // A Stop the vehicle can no longer honour becomes a Go.
        let d = entrance - v.pos;
        if decision == Decision::Stop && d <= v.speed * v.speed / (2.0 * p.b_emergency) + COMMIT_MARGIN {
            decision = Decision::Go;
            self.state.log(EventKind::GoCommitted, Some(&v));
        }
        self.agents.insert(id, Agent { decision });

        if decision == Decision::Go {
            return Ok(compose(Decision::Go, RawLowAction { acc: 0.0, lc: 0.0 }, &p)?);
        }
        let cmd = match self.control.low {
            LowSource::HoldAtEntrance => hl_only_act(&v, Decision::Stop, entrance, &self.cfg.hl_only, &p),
            LowSource::Random => {
                let raw = RawLowAction { acc: self.rng.random_range(-1.0..=1.0), lc: self.rng.random_range(-1.0..=1.0) };
                self.state.log(EventKind::Decision { level: DecisionLevel::Low, action: fmt_raw(raw) }, Some(&v));
                let c = compose(Decision::Stop, raw, &p)?;
                safety_filter(c, &v, &self.cfg.bands, Decision::Stop, &self.state.spec, &p)
            }
            LowSource::Policy => {
                let obs = low_level_obs_with(&self.state, id, macro_part.to_vec()).expect("controllable RV").to_vec();
                let (raw, u, lp) = low_level_act(&obs, self.policy(), &mut self.rng, self.control.deterministic_low)?;
                self.state.log(EventKind::Decision { level: DecisionLevel::Low, action: fmt_raw(raw) }, Some(&v));
                if self.record {
                    info.low.push(LowRecord { vehicle: id, obs, u, log_prob: lp });
                }
                let c = compose(Decision::Stop, raw, &p)?;
                safety_filter(c, &v, &self.cfg.bands, Decision::Stop, &self.state.spec, &p)
            }
        };
        Ok(cmd)
    }

    pub fn reward(&self) -> f64 {
        step_reward(&self.state, &self.cfg.obs)
    }

    /// Closes the run: records final clocks of vehicles still present.
    pub fn finish(&mut self) {
        self.state.finish();
    }
}

/// Slack (m) added to the emergency stopping distance when deciding that a
/// Stop can no longer be honoured.
pub const COMMIT_MARGIN: f64 = 0.5;

fn fmt_raw(r: RawLowAction) -> String {
    format!("acc={:.4} lc={:.4}", r.acc, r.lc)
}
