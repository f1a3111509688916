use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};

use super::nn::{backward, clip_grad_norm, Adam, MlpCache};
use super::policy::{gaussian_entropy, gaussian_log_prob, Policy};
use super::rollout::{normalize_advantages, RolloutBuffer};
use super::PpoConfig;

/// Per-sample clipped surrogate `min(ρ·A, clip(ρ, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Samples the loss is evaluated on. Advantages are used as given.
#[derive(Clone, Copy, Debug)]
pub struct Minibatch<'a> {
    pub obs: &'a [f64],
    pub actions: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub advantages: &'a [f64],
    pub returns: &'a [f64],
}

impl Minibatch<'_> {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
}

/// Scratch space reused across minibatches.
#[derive(Debug, Default)]
pub struct Workspace {
    actor: MlpCache,
    critic: MlpCache,
    d_mean: Vec<f64>,
    d_value: Vec<f64>,
}

/// PPO loss `−surrogate + c_v·MSE(V, R) − c_e·H` and its gradient with respect
/// to all policy parameters (written into `grad`, overwritten).
pub fn loss_and_grad(policy: &Policy, mb: &Minibatch, cfg: &PpoConfig, grad: &mut [f64], ws: &mut Workspace) -> LossStats {
    let n = mb.len();
    let ad = policy.act_dim;
    let nf = n as f64;
    policy.actor_forward(mb.obs, n, &mut ws.actor);
    policy.critic_forward(mb.obs, n, &mut ws.critic);
    let log_std = policy.log_std().to_vec();
    let inv_var: Vec<f64> = log_std.iter().map(|l| (-2.0 * l).exp()).collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    ws.d_mean.clear();
    ws.d_mean.resize(n * ad, 0.0);
    ws.d_value.clear();
    ws.d_value.resize(n, 0.0);
    let mut d_log_std = vec![0.0; ad];
    let eps = cfg.clip_range;
    let mut stats = LossStats::default();
    let means = ws.actor.output();
    let values = ws.critic.output();
    for i in 0..n {
        let mu = &means[i * ad..(i + 1) * ad];
        let a = &mb.actions[i * ad..(i + 1) * ad];
        let lp = gaussian_log_prob(a, mu, &log_std);
        let log_ratio = lp - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let adv = mb.advantages[i];
        stats.policy_loss -= clipped_surrogate(ratio, adv, eps) / nf;
        stats.approx_kl += ((ratio - 1.0) - log_ratio) / nf;
        if (ratio - 1.0).abs() > eps {
            stats.clip_frac += 1.0 / nf;
        }
        // d(surrogate)/dρ is A on the unclipped branch and 0 where clipping binds
        let unclipped = if adv >= 0.0 { ratio <= 1.0 + eps } else { ratio >= 1.0 - eps };
        let d_lp = if unclipped { -adv * ratio / nf } else { 0.0 };
        for j in 0..ad {
            let diff = a[j] - mu[j];
            ws.d_mean[i * ad + j] = d_lp * diff * inv_var[j];
            d_log_std[j] += d_lp * (diff * diff * inv_var[j] - 1.0);
        }
        let err = values[i] - mb.returns[i];
        stats.value_loss += err * err / nf;
        ws.d_value[i] = cfg.value_coef * 2.0 * err / nf;
    }
    stats.entropy = gaussian_entropy(&log_std);
    stats.loss = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;
    backward(&policy.params, policy.actor_shape(), &ws.actor, &ws.d_mean, grad);
    backward(&policy.params, policy.critic_shape(), &ws.critic, &ws.d_value, grad);
    let off = policy.log_std_offset();
    for j in 0..ad {
        grad[off + j] = d_log_std[j] - cfg.entropy_coef;
    }
    stats
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_frac: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// `n_epochs` passes of shuffled minibatch Adam steps over a full buffer
/// whose advantages are already computed.
pub fn ppo_update(
    policy: &mut Policy,
    opt: &mut Adam,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<UpdateStats> {
    let n = buf.len();
    if buf.advantages.len() != n || n == 0 {
        return Err(Error::InvalidParam("rollout buffer is empty or lacks advantages".into()));
    }
    let (od, ad) = (buf.obs_dim, buf.act_dim);
    let bs = cfg.batch_size.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; policy.params.len()];
    let mut ws = Workspace::default();
    let (mut obs, mut act, mut lp, mut adv, mut ret) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut total = UpdateStats::default();
    for _ in 0..cfg.n_epochs {
        idx.shuffle(rng);
        for chunk in idx.chunks(bs) {
            obs.clear();
            act.clear();
            lp.clear();
            adv.clear();
            ret.clear();
            for &i in chunk {
                obs.extend_from_slice(&buf.obs[i * od..(i + 1) * od]);
                act.extend_from_slice(&buf.actions[i * ad..(i + 1) * ad]);
                lp.push(buf.log_probs[i]);
                adv.push(buf.advantages[i]);
                ret.push(buf.returns[i]);
            }
            normalize_advantages(&mut adv);
            let mb = Minibatch {
                obs: &obs,
                actions: &act,
                old_log_probs: &lp,
                advantages: &adv,
                returns: &ret,
            };
            let s = loss_and_grad(policy, &mb, cfg, &mut grad, &mut ws);
            if !s.loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("PPO loss {s:?}")));
            }
            let gn = clip_grad_norm(&mut grad, cfg.max_grad_norm);
            opt.step(&mut policy.params, &grad);
            total.loss += s.loss;
            total.policy_loss += s.policy_loss;
            total.value_loss += s.value_loss;
            total.entropy += s.entropy;
            total.approx_kl += s.approx_kl;
            total.clip_frac += s.clip_frac;
            total.grad_norm += gn;
            total.minibatches += 1;
        }
    }
    let k = total.minibatches.max(1) as f64;
    for v in [
        &mut total.loss,
        &mut total.policy_loss,
        &mut total.value_loss,
        &mut total.entropy,
        &mut total.approx_kl,
        &mut total.clip_frac,
        &mut total.grad_norm,
    ] {
        *v /= k;
    }
    Ok(total)
}
