//! Clipped-surrogate PPO loss with analytic gradients.

use crate::nn::Mlp;
use crate::policy::{log_softmax2, squashed_log_prob, LOG_STD_MAX, LOG_STD_MIN};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    /// Index into a two-way categorical head.
    Discrete(usize),
    /// Pre-squash sample of the two-dimensional tanh-Gaussian head.
    Continuous([f64; 2]),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub action: Action,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub value_target: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub clip_eps: f64,
    pub vf_coef: f64,
    pub ent_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub vf_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

/// Log-probability and entropy of a head output, with their derivatives
/// with respect to that output.
pub struct HeadTerms {
    pub log_prob: f64,
    pub entropy: f64,
    pub dlog_prob: Vec<f64>,
    pub dentropy: Vec<f64>,
}

pub fn head_terms(out: &[f64], action: &Action) -> HeadTerms {
    match *action {
        Action::Discrete(a) => {
            let lp = log_softmax2(out);
            let p = [lp[0].exp(), lp[1].exp()];
            let entropy = -(p[0] * lp[0] + p[1] * lp[1]);
            let dlog_prob = (0..2).map(|k| f64::from(u8::from(k == a)) - p[k]).collect();
            let dentropy = (0..2).map(|k| -p[k] * (lp[k] + entropy)).collect();
            HeadTerms { log_prob: lp[a], entropy, dlog_prob, dentropy }
        }
        Action::Continuous(u) => {
            let mean = [out[0], out[1]];
            let ls = [out[2].clamp(LOG_STD_MIN, LOG_STD_MAX), out[3].clamp(LOG_STD_MIN, LOG_STD_MAX)];
            let log_prob = squashed_log_prob(u, mean, ls);
            let mut dlog_prob = vec![0.0; 4];
            let mut dentropy = vec![0.0; 4];
            let mut entropy = 0.0;
            for k in 0..2 {
                let sigma = ls[k].exp();
                let z = (u[k] - mean[k]) / sigma;
                dlog_prob[k] = z / sigma;
                entropy += ls[k] + 0.5 * (1.0 + LN_2PI);
                // The clamp is flat outside its range.
                if out[2 + k] > LOG_STD_MIN && out[2 + k] < LOG_STD_MAX {
                    dlog_prob[2 + k] = z * z - 1.0;
                    dentropy[2 + k] = 1.0;
                }
            }
            HeadTerms { log_prob, entropy, dlog_prob, dentropy }
        }
    }
}

/// Mean loss over `batch`. When `grads` is given, the gradients of the loss
/// with respect to the policy and value parameters are added into it.
pub fn ppo_loss(
    policy: &Mlp,
    value: &Mlp,
    batch: &[Sample],
    cfg: &LossConfig,
    mut grads: Option<(&mut [f64], &mut [f64])>,
) -> LossStats {
    let n = batch.len();
    if n == 0 {
        return LossStats::default();
    }
    let inv = 1.0 / n as f64;
    let mut s = LossStats::default();
    let mut clipped = 0usize;
    for x in batch {
        let pc = policy.forward_cache(&x.obs);
        let h = head_terms(pc.output(), &x.action);
        let ratio = (h.log_prob - x.log_prob_old).exp();
        let a = x.advantage;
        let unclipped = ratio * a;
        let clipped_ratio = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
        let surr = unclipped.min(clipped_ratio * a);
        s.policy_loss -= surr * inv;
        s.entropy += h.entropy * inv;
        s.approx_kl += (x.log_prob_old - h.log_prob) * inv;
        if (ratio - 1.0).abs() > cfg.clip_eps {
            clipped += 1;
        }

        let vc = value.forward_cache(&x.obs);
        let err = vc.output()[0] - x.value_target;
        s.vf_loss += err * err * inv;

        if let Some((gp, gv)) = grads.as_mut() {
            // The unclipped branch is active when it is the minimum.
            let dsurr_dlogp = if unclipped <= clipped_ratio * a { unclipped } else { 0.0 };
            let dout: Vec<f64> = h
                .dlog_prob
                .iter()
                .zip(&h.dentropy)
                .map(|(dl, de)| (-dsurr_dlogp * dl - cfg.ent_coef * de) * inv)
                .collect();
            policy.backward(&pc, &dout, gp);
            value.backward(&vc, &[2.0 * cfg.vf_coef * err * inv], gv);
        }
    }
    s.clip_frac = clipped as f64 * inv;
    s.loss = s.policy_loss + cfg.vf_coef * s.vf_loss - cfg.ent_coef * s.entropy;
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> LossConfig {
        LossConfig { clip_eps: 0.3, vf_coef: 0.5, ent_coef: 0.01 }
    }

    fn batch(policy: &Mlp, value: &Mlp, n: usize, continuous: bool, rng: &mut ChaCha8Rng) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let obs: Vec<f64> = (0..policy.input_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let action = if continuous {
                    Action::Continuous([rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
                } else {
                    Action::Discrete(rng.random_range(0..2))
                };
                let lp = head_terms(&policy.forward(&obs), &action).log_prob;
                Sample {
                    obs,
                    action,
                    log_prob_old: lp + rng.random_range(-0.5..0.5),
                    advantage: rng.random_range(-2.0..2.0),
                    value_target: value.forward(&[0.0; 4][..value.input_len()])[0] + rng.random_range(-1.0..1.0),
                }
            })
            .collect()
    }

    #[test]
    fn identity_at_old_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = Mlp::new(&[4, 8, 2], 1.0, &mut rng);
        let v = Mlp::new(&[4, 8, 1], 1.0, &mut rng);
        let mut b = batch(&p, &v, 64, false, &mut rng);
        for x in &mut b {
            x.log_prob_old = head_terms(&p.forward(&x.obs), &x.action).log_prob;
            x.value_target = v.forward(&x.obs)[0];
        }
        let s = ppo_loss(&p, &v, &b, &LossConfig { ent_coef: 0.0, ..cfg() }, None);
        let mean_adv = b.iter().map(|x| x.advantage).sum::<f64>() / b.len() as f64;
        assert!((s.policy_loss + mean_adv).abs() < 1e-9);
        assert_eq!(s.vf_loss, 0.0);
        assert_eq!(s.clip_frac, 0.0);
    }

    fn check_grad(sizes_p: &[usize], continuous: bool, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = Mlp::new(sizes_p, 1.0, &mut rng);
        let v = Mlp::new(&[sizes_p[0], 8, 1], 1.0, &mut rng);
        let b = batch(&p, &v, 8, continuous, &mut rng);
        let c = cfg();
        let mut gp = vec![0.0; p.params.len()];
        let mut gv = vec![0.0; v.params.len()];
        ppo_loss(&p, &v, &b, &c, Some((&mut gp, &mut gv)));
        let h = 1e-6;
        let mut fd = Vec::new();
        for i in 0..p.params.len() {
            let (mut a, mut z) = (p.clone(), p.clone());
            a.params[i] += h;
            z.params[i] -= h;
            fd.push((ppo_loss(&a, &v, &b, &c, None).loss - ppo_loss(&z, &v, &b, &c, None).loss) / (2.0 * h));
        }
        for i in 0..v.params.len() {
            let (mut a, mut z) = (v.clone(), v.clone());
            a.params[i] += h;
            z.params[i] -= h;
            fd.push((ppo_loss(&p, &a, &b, &c, None).loss - ppo_loss(&p, &z, &b, &c, None).loss) / (2.0 * h));
        }
        let an: Vec<f64> = gp.iter().chain(&gv).copied().collect();
        let diff = an.iter().zip(&fd).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let scale = an.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
        assert!(diff / scale.max(1e-12) < 1e-4, "seed {seed}: rel err {}", diff / scale);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..10 {
            check_grad(&[4, 8, 2], false, seed);
            check_grad(&[4, 8, 4], true, seed);
        }
    }
}
