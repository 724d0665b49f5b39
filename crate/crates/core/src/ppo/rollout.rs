//! Experience collection.

use std::collections::BTreeMap;

use rand::Rng;

use crate::controller::{rng_stream, Control, Env, EnvConfig, HighSource, LowSource};
use crate::observe::{avg_waiting_time, high_level_obs, low_level_obs};
use crate::policy::PolicyParams;
use crate::vehicle::VehicleId;

use super::{Action, TrainConfig, TrainError};

/// Which levels act from the policy and are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    High,
    Low,
    Joint,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::High => "high",
            Stage::Low => "low",
            Stage::Joint => "joint",
        }
    }

    pub fn control(self) -> Control {
        let (low, deterministic_high) = match self {
            Stage::High => (LowSource::HoldAtEntrance, false),
            // The frozen high level acts as it will at evaluation.
            Stage::Low => (LowSource::Policy, true),
            Stage::Joint => (LowSource::Policy, false),
        };
        Control { high: HighSource::Policy, low, signal: false, deterministic_high, deterministic_low: false }
    }
}

/// Consecutive decisions of one agent at one level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub obs: Vec<Vec<f64>>,
    pub actions: Vec<Action>,
    pub log_probs: Vec<f64>,
    /// Shared step reward at each decision instant.
    pub rewards: Vec<f64>,
    /// Observation after the last step when the trajectory was cut short;
    /// `None` when it ended terminally.
    pub bootstrap_obs: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    fn push(&mut self, obs: Vec<f64>, action: Action, log_prob: f64, reward: f64) {
        self.obs.push(obs);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Rollout {
    pub high: Vec<Trajectory>,
    pub low: Vec<Trajectory>,
    pub env_steps: u64,
    pub episodes: usize,
    /// Mean step reward over all environment steps.
    pub mean_reward: f64,
    /// Mean over episodes of the average waiting time.
    pub mean_wait: f64,
    pub gridlocks: usize,
}

impl Rollout {
    pub fn transitions(&self) -> usize {
        self.high.iter().chain(&self.low).map(Trajectory::len).sum()
    }
}

pub trait RolloutSource {
    /// Collects experience with frozen `params`; `seed` fixes all randomness.
    fn collect(&mut self, params: &PolicyParams, stage: Stage, seed: u64) -> Result<Rollout, TrainError>;
}

/// Episodes of the traffic simulation.
#[derive(Debug, Clone)]
pub struct TrafficSource {
    pub env: EnvConfig,
    pub rollout_len: u64,
    pub episode_horizon: f64,
    pub gridlock_penalty: f64,
}

impl TrafficSource {
    pub fn new(env: EnvConfig, cfg: &TrainConfig) -> Self {
        TrafficSource {
            env,
            rollout_len: cfg.rollout_len,
            episode_horizon: cfg.episode_horizon,
            gridlock_penalty: cfg.gridlock_penalty,
        }
    }

    /// One episode of at most `max_steps` steps appended to `out`.
    pub fn episode(&self, params: &PolicyParams, stage: Stage, seed: u64, max_steps: u64, out: &mut Rollout) -> Result<(), TrainError> {
        let mut env = Env::new(&self.env, stage.control(), Some(params), seed);
        env.record = true;
        let steps = ((self.episode_horizon / self.env.sim.dt).round() as u64).min(max_steps);
        let mut high: BTreeMap<VehicleId, Trajectory> = BTreeMap::new();
        let mut low: BTreeMap<VehicleId, Trajectory> = BTreeMap::new();
        let mut reward_sum = 0.0;
        let mut done = 0;
        for _ in 0..steps {
            let r = env.reward();
            let info = env.step()?;
            done += 1;
            reward_sum += r;
            for h in info.high {
                high.entry(h.vehicle).or_default().push(h.obs, Action::Discrete(h.action), h.log_prob, r);
            }
            for l in info.low {
                low.entry(l.vehicle).or_default().push(l.obs, Action::Continuous(l.u), l.log_prob, r);
            }
            for id in info.exited {
                out.high.extend(high.remove(&id));
                out.low.extend(low.remove(&id));
            }
            if env.gridlock_at.is_some() {
                out.gridlocks += 1;
                for t in high.values_mut().chain(low.values_mut()) {
                    if let Some(last) = t.rewards.last_mut() {
                        *last += self.gridlock_penalty;
                    }
                }
                out.high.extend(std::mem::take(&mut high).into_values());
                out.low.extend(std::mem::take(&mut low).into_values());
                break;
            }
        }
        let obs = &self.env.obs;
        for (id, mut t) in high {
            t.bootstrap_obs = Some(high_level_obs(&env.state, id, obs).expect("open agents are controllable"));
            out.high.push(t);
        }
        for (id, mut t) in low {
            t.bootstrap_obs = Some(low_level_obs(&env.state, id, obs).expect("open agents are controllable").to_vec());
            out.low.push(t);
        }
        env.finish();
        let wait = avg_waiting_time(&env.state.event_log).avg_waiting_time;
        let n = out.episodes as f64;
        out.mean_wait = (out.mean_wait * n + wait) / (n + 1.0);
        let total = out.env_steps as f64 * out.mean_reward + reward_sum;
        out.env_steps += done;
        out.mean_reward = if out.env_steps == 0 { 0.0 } else { total / out.env_steps as f64 };
        out.episodes += 1;
        Ok(())
    }
}

impl RolloutSource for TrafficSource {
    fn collect(&mut self, params: &PolicyParams, stage: Stage, seed: u64) -> Result<Rollout, TrainError> {
        let mut out = Rollout::default();
        let mut seeds = rng_stream(seed, 3);
        let per_episode = (self.episode_horizon / self.env.sim.dt).round() as u64;
        if per_episode == 0 {
            return Ok(out);
        }
        while out.env_steps < self.rollout_len {
            let left = self.rollout_len - out.env_steps;
            self.episode(params, stage, seeds.random(), left, &mut out)?;
        }
        Ok(out)
    }
}
