//! Critic-regularised regression with a one-step TD critic, a periodically
//! synced target critic, and an exact value baseline over the discrete actions.

use ndarray::ArrayView2;

use super::{policy_probs, sample_indices, AgentConfig, Transitions, WeightRule};
use crate::error::{Error, Result};
use crate::nn::loss::{td_loss_and_grad, weighted_categorical_ce};
use crate::nn::{gather_rows, Adam, Mlp};
use crate::seed;

/// Largest exponential weight.
const MAX_EXP_WEIGHT: f64 = 20.0;

pub struct CrrOutput {
    pub policy: Mlp,
    pub critic: Mlp,
}

/// `A(s, a) = Q(s, a) - Σ_b π(b|s) Q(s, b)` for each row of `x`.
pub fn advantages(policy: &Mlp, critic: &Mlp, x: ArrayView2<f64>, actions: &[usize]) -> Result<Vec<f64>> {
    let q = critic.logits(x)?;
    let pi = policy_probs(policy, x)?;
    Ok(actions
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let v: f64 = q.row(i).iter().zip(pi.row(i)).map(|(q, p)| q * p).sum();
            q[[i, a]] - v
        })
        .collect())
}

pub fn crr_weights(adv: &[f64], rule: WeightRule) -> Vec<f64> {
    adv.iter()
        .map(|&a| match rule {
            WeightRule::Binary => f64::from(u8::from(a > 0.0)),
            WeightRule::Exponential { beta } => (a / beta).exp().min(MAX_EXP_WEIGHT),
        })
        .collect()
}

/// TD targets `r + γ·(1 - terminal)·Σ_a π(a|s') Q̄(s', a)`.
fn td_targets(
    policy: &Mlp,
    target: &Mlp,
    next: ArrayView2<f64>,
    rewards: &[f64],
    terminal: &[bool],
    discount: f64,
) -> Result<Vec<f64>> {
    let q = target.logits(next)?;
    let pi = policy_probs(policy, next)?;
    let mut y = Vec::with_capacity(rewards.len());
    for i in 0..rewards.len() {
        let v: f64 = q.row(i).iter().zip(pi.row(i)).map(|(q, p)| q * p).sum();
        let t = rewards[i] + if terminal[i] { 0.0 } else { discount * v };
        if !t.is_finite() {
            return Err(Error::Training("non-finite TD target".into()));
        }
        y.push(t);
    }
    Ok(y)
}

/// Alternate critic and policy updates on mini-batches of `data`.
/// `on_checkpoint(step, policy)` runs after every step.
pub fn crr_train<F>(data: &Transitions, config: &AgentConfig, mut on_checkpoint: F) -> Result<CrrOutput>
where
    F: FnMut(usize, &Mlp) -> Result<()>,
{
    config.validate()?;
    if data.is_empty() {
        return Err(Error::Usage("no transitions to learn from".into()));
    }
    let dim = data.obs_dim;
    let mut policy = config.new_policy(dim, data.num_actions)?;
    let mut critic = config.new_critic(dim, data.num_actions)?;
    let mut target = critic.clone();
    let mut opt_pi = Adam::for_net(&policy, config.learning_rate);
    let mut opt_q = Adam::for_net(&critic, config.learning_rate);
    let mut rng = seed::rng(seed::derive_str(config.seed, "crr-batches"));
    let k = config.batch_size;
    for step in 1..=config.steps {
        let idx = sample_indices(&mut rng, data.len(), k);
        let x = gather_rows(&data.obs, dim, &idx);
        let xn = gather_rows(&data.next_obs, dim, &idx);
        let a: Vec<usize> = idx.iter().map(|&i| data.actions[i]).collect();
        let r: Vec<f64> = idx.iter().map(|&i| data.rewards[i]).collect();
        let term: Vec<bool> = idx.iter().map(|&i| data.terminal[i]).collect();

        let y = td_targets(&policy, &target, xn.view(), &r, &term, config.discount)?;
        let (_, gq) = td_loss_and_grad(&critic, x.view(), &a, &y)?;
        opt_q.step(&mut critic, &gq)?;

        let adv = advantages(&policy, &critic, x.view(), &a)?;
        let w: Vec<f64> = crr_weights(&adv, config.weight_rule)
            .into_iter()
            .map(|w| w / k as f64)
            .collect();
        if w.iter().any(|&w| w > 0.0) {
            let (_, gp) = weighted_categorical_ce(&policy, x.view(), &a, &w)?;
            opt_pi.step(&mut policy, &gp)?;
        }

        if step % config.target_sync == 0 {
            target = critic.clone();
        }
        on_checkpoint(step, &policy)?;
    }
    Ok(CrrOutput { policy, critic })
}
