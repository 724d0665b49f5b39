//! Proximal policy optimization for both controller levels.

pub mod adam;
pub mod bandit;
pub mod gae;
pub mod loss;
pub mod rollout;
pub mod update;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::policy::{PolicyError, PolicyParams};

pub use adam::{clip_grad_norm, Adam};
pub use gae::gae;
pub use loss::{head_terms, ppo_loss, Action, LossConfig, LossStats, Sample};
pub use rollout::{Rollout, RolloutSource, Stage, TrafficSource, Trajectory};
pub use update::{LevelOptim, UpdateOutcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// High level learns; Stop means braking to the entrance line.
    TrainHighOnly,
    /// High level frozen, low level learns.
    TrainLowOnly,
    TrainJoint,
    /// High level alone first, then the low level under the frozen high level.
    #[default]
    TwoStage,
}

impl TrainMode {
    pub fn stages(self) -> &'static [Stage] {
        match self {
            TrainMode::TrainHighOnly => &[Stage::High],
            TrainMode::TrainLowOnly => &[Stage::Low],
            TrainMode::TrainJoint => &[Stage::Joint],
            TrainMode::TwoStage => &[Stage::High, Stage::Low],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub clip_eps: f64,
    pub gamma: f64,
    pub lam: f64,
    pub lr: f64,
    pub epochs_per_update: usize,
    pub minibatch_size: usize,
    /// Minimum environment steps per rollout; whole episodes are collected.
    pub rollout_len: u64,
    /// Seconds per training episode.
    pub episode_horizon: f64,
    /// Updates per training stage.
    pub updates: usize,
    pub vf_coef: f64,
    pub ent_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Multiplies every reward before advantage estimation.
    pub reward_scale: f64,
    /// Added to the last reward of every open trajectory on gridlock.
    pub gridlock_penalty: f64,
    /// Write an intermediate checkpoint every this many updates (0: never).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: TrainMode::TwoStage,
            clip_eps: 0.3,
            gamma: 0.99,
            lam: 0.95,
            lr: 3e-4,
            epochs_per_update: 4,
            minibatch_size: 256,
            rollout_len: 4000,
            episode_horizon: 400.0,
            updates: 20,
            vf_coef: 0.5,
            ent_coef: 0.0,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            reward_scale: 0.01,
            gridlock_penalty: -50.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &'static str| Err(TrainError::Config(m));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must be in (0, 1)");
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must be in (0, 1)");
        }
        if !(0.0..=1.0).contains(&self.lam) {
            return bad("lam must be in [0, 1]");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs_per_update == 0 || self.minibatch_size == 0 {
            return bad("epochs_per_update and minibatch_size must be positive");
        }
        if !(self.vf_coef > 0.0 && self.vf_coef.is_finite()) {
            return bad("vf_coef must be positive");
        }
        if !(self.ent_coef >= 0.0 && self.ent_coef.is_finite()) {
            return bad("ent_coef must be non-negative");
        }
        if !(self.max_grad_norm > 0.0) {
            return bad("max_grad_norm must be positive");
        }
        if !(self.episode_horizon >= 0.0 && self.episode_horizon.is_finite()) {
            return bad("episode_horizon must be non-negative");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite() && self.gridlock_penalty.is_finite()) {
            return bad("reward_scale must be positive and gridlock_penalty finite");
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig { clip_eps: self.clip_eps, vf_coef: self.vf_coef, ent_coef: self.ent_coef }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(&'static str),
    #[error("non-finite loss in minibatch {minibatch} of update {update}: {stats:?}")]
    NonFiniteLoss { update: usize, minibatch: usize, stats: LossStats },
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateLog {
    pub update_idx: usize,
    pub stage: Stage,
    pub env_steps: u64,
    pub mean_reward: f64,
    pub mean_wait: f64,
    pub clip_frac: f64,
    pub approx_kl: f64,
    pub loss: f64,
    pub vf_loss: f64,
}

/// Runs every stage of `cfg.mode`, calling `on_update` after each update.
pub fn train<S: RolloutSource + ?Sized>(
    source: &mut S,
    mut params: PolicyParams,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut on_update: impl FnMut(&UpdateLog, &PolicyParams),
) -> Result<PolicyParams, TrainError> {
    cfg.validate()?;
    let mut idx = 0;
    for &stage in cfg.mode.stages() {
        let mut opt_high = LevelOptim::new(&params.high, &params.value_high, cfg.lr);
        let mut opt_low = LevelOptim::new(&params.low, &params.value_low, cfg.lr);
        for _ in 0..cfg.updates {
            let episode_seed: u64 = rng.random();
            let rollout = source.collect(&params, stage, episode_seed)?;
            let mut parts = Vec::new();
            if stage != Stage::Low {
                parts.push(opt_high.update(&mut params.high, &mut params.value_high, &rollout.high, cfg, rng, idx)?);
            }
            if stage != Stage::High {
                parts.push(opt_low.update(&mut params.low, &mut params.value_low, &rollout.low, cfg, rng, idx)?);
            }
            let n: usize = parts.iter().map(|p| p.samples).sum();
            let avg = |f: fn(&LossStats) -> f64| {
                if n == 0 {
                    0.0
                } else {
                    parts.iter().map(|p| f(&p.stats) * p.samples as f64).sum::<f64>() / n as f64
                }
            };
            let log = UpdateLog {
                update_idx: idx,
                stage,
                env_steps: rollout.env_steps,
                mean_reward: rollout.mean_reward,
                mean_wait: rollout.mean_wait,
                clip_frac: avg(|s| s.clip_frac),
                approx_kl: avg(|s| s.approx_kl),
                loss: avg(|s| s.loss),
                vf_loss: avg(|s| s.vf_loss),
            };
            on_update(&log, &params);
            idx += 1;
        }
    }
    Ok(params)
}
