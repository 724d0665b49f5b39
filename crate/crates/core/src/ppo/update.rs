//! One PPO update of a policy/value network pair.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::nn::Mlp;

use super::{clip_grad_norm, gae, ppo_loss, Adam, LossStats, Sample, TrainConfig, TrainError, Trajectory};

/// Optimizer state of one level, kept across updates.
#[derive(Debug, Clone)]
pub struct LevelOptim {
    pub policy: Adam,
    pub value: Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateOutcome {
    /// Minibatch-averaged statistics of the last epoch.
    pub stats: LossStats,
    pub samples: usize,
}

/// Flattens trajectories into samples with advantages and value targets
/// computed under `value`.
pub fn build_samples(value: &Mlp, trajs: &[Trajectory], cfg: &TrainConfig) -> Vec<Sample> {
    let mut out = Vec::new();
    for t in trajs {
        let values: Vec<f64> = t.obs.iter().map(|o| value.forward(o)[0]).collect();
        let last = t.bootstrap_obs.as_ref().map_or(0.0, |o| value.forward(o)[0]);
        let rewards: Vec<f64> = t.rewards.iter().map(|r| r * cfg.reward_scale).collect();
        let (adv, ret) = gae(&rewards, &values, last, t.bootstrap_obs.is_none(), cfg.gamma, cfg.lam);
        for i in 0..t.len() {
            out.push(Sample {
                obs: t.obs[i].clone(),
                action: t.actions[i],
                log_prob_old: t.log_probs[i],
                advantage: adv[i],
                value_target: ret[i],
            });
        }
    }
    if cfg.normalize_advantages {
        normalize_advantages(&mut out);
    }
    out
}

/// Shifts advantages to mean 0 and, unless they are all equal, scales them to
/// standard deviation 1.
pub fn normalize_advantages(samples: &mut [Sample]) {
    let n = samples.len();
    if n == 0 {
        return;
    }
    let mean = samples.iter().map(|s| s.advantage).sum::<f64>() / n as f64;
    let var = samples.iter().map(|s| (s.advantage - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    for s in samples.iter_mut() {
        s.advantage -= mean;
        if std > 1e-8 {
            s.advantage /= std;
        }
    }
}

impl LevelOptim {
    pub fn new(policy: &Mlp, value: &Mlp, lr: f64) -> Self {
        LevelOptim { policy: Adam::new(policy.params.len(), lr), value: Adam::new(value.params.len(), lr) }
    }

    pub fn update(
        &mut self,
        policy: &mut Mlp,
        value: &mut Mlp,
        trajs: &[Trajectory],
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
        update_idx: usize,
    ) -> Result<UpdateOutcome, TrainError> {
        let samples = build_samples(value, trajs, cfg);
        self.update_samples(policy, value, &samples, cfg, rng, update_idx)
    }

    /// Epochs of shuffled minibatch descent on a fixed sample set.
    pub fn update_samples(
        &mut self,
        policy: &mut Mlp,
        value: &mut Mlp,
        samples: &[Sample],
        cfg: &TrainConfig,
        rng: &mut ChaCha8Rng,
        update_idx: usize,
    ) -> Result<UpdateOutcome, TrainError> {
        if samples.is_empty() {
            return Ok(UpdateOutcome::default());
        }
        let loss_cfg = cfg.loss();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut gp = vec![0.0; policy.params.len()];
        let mut gv = vec![0.0; value.params.len()];
        let mut last = LossStats::default();
        for _ in 0..cfg.epochs_per_update {
            order.shuffle(rng);
            let mut acc = LossStats::default();
            let mut batches = 0;
            for (mb, chunk) in order.chunks(cfg.minibatch_size).enumerate() {
                let batch: Vec<Sample> = chunk.iter().map(|&i| samples[i].clone()).collect();
                gp.fill(0.0);
                gv.fill(0.0);
                let s = ppo_loss(policy, value, &batch, &loss_cfg, Some((&mut gp, &mut gv)));
                if !s.loss.is_finite() || gp.iter().chain(&gv).any(|g| !g.is_finite()) {
                    return Err(TrainError::NonFiniteLoss { update: update_idx, minibatch: mb, stats: s });
                }
                clip_grad_norm(&mut [&mut gp, &mut gv], cfg.max_grad_norm);
                self.policy.step(&mut policy.params, &gp);
                self.value.step(&mut value.params, &gv);
                acc.loss += s.loss;
                acc.policy_loss += s.policy_loss;
                acc.vf_loss += s.vf_loss;
                acc.entropy += s.entropy;
                acc.approx_kl += s.approx_kl;
                acc.clip_frac += s.clip_frac;
                batches += 1;
            }
            let k = 1.0 / batches as f64;
            last = LossStats {
                loss: acc.loss * k,
                policy_loss: acc.policy_loss * k,
                vf_loss: acc.vf_loss * k,
                entropy: acc.entropy * k,
                approx_kl: acc.approx_kl * k,
                clip_frac: acc.clip_frac * k,
            };
        }
        Ok(UpdateOutcome { stats: last, samples: samples.len() })
    }
}
