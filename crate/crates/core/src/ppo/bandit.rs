//! Two-armed bandit exposed as a rollout source, for exercising the full
//! training loop without traffic.

use rand::Rng;

use crate::controller::rng_stream;
use crate::policy::{high_level_act, PolicyParams};

use super::{Action, Rollout, RolloutSource, Stage, TrainError, Trajectory};

#[derive(Debug, Clone)]
pub struct Bandit {
    /// Mean payoff of each arm (index 0 = Go, 1 = Stop).
    pub payoff: [f64; 2],
    /// Half-width of the uniform payoff noise.
    pub noise: f64,
    pub pulls_per_rollout: usize,
}

impl Bandit {
    /// Constant observation of the length the high-level head expects.
    pub fn obs(params: &PolicyParams) -> Vec<f64> {
        vec![0.5; params.high.input_len()]
    }

    pub fn prob_of(params: &PolicyParams, arm: usize) -> f64 {
        let logits = params.high.forward(&Self::obs(params));
        crate::policy::log_softmax2(&logits)[arm].exp()
    }
}

impl RolloutSource for Bandit {
    fn collect(&mut self, params: &PolicyParams, _stage: Stage, seed: u64) -> Result<Rollout, TrainError> {
        let mut rng = rng_stream(seed, 5);
        let obs = Self::obs(params);
        let mut out = Rollout::default();
        let mut total = 0.0;
        for _ in 0..self.pulls_per_rollout {
            let (d, lp) = high_level_act(&obs, params, &mut rng, false)?;
            let r = self.payoff[d.index()] + rng.random_range(-self.noise..=self.noise);
            total += r;
            out.high.push(Trajectory {
                obs: vec![obs.clone()],
                actions: vec![Action::Discrete(d.index())],
                log_probs: vec![lp],
                rewards: vec![r],
                bootstrap_obs: None,
            });
        }
        out.env_steps = self.pulls_per_rollout as u64;
        out.episodes = self.pulls_per_rollout;
        out.mean_reward = if self.pulls_per_rollout == 0 { 0.0 } else { total / self.pulls_per_rollout as f64 };
        Ok(out)
    }
}
