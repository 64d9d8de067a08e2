//! Offline policy learning on a relabelled dataset (behavioural cloning and
//! critic-regularised regression) and rollout evaluation in the true
//! environment.

mod crr;
mod eval;

pub use crr::{advantages, crr_train, crr_weights, CrrOutput};
pub use eval::{evaluate_policy, EvalMode, EvalReport, Policy, TablePolicy};

use ndarray::ArrayView2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::env::NUM_ACTIONS;
use crate::error::{Error, Result};
use crate::nn::loss::weighted_categorical_ce;
use crate::nn::{gather_rows, Adam, Head, Mlp};
use crate::seed;
use crate::strategies::RewardTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Bc,
    Crr,
}

/// How the last logged step of an episode enters the critic target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeEnd {
    /// The episode ends in an absorbing state: no bootstrap.
    #[default]
    Terminal,
    /// The episode was cut off by a time limit: bootstrap from the final
    /// observation as for any other step.
    Truncated,
}

/// How critic advantages become policy-regression weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum WeightRule {
    /// `1[A > 0]`.
    Binary,
    /// `min(exp(A / beta), 20)`.
    Exponential { beta: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub discount: f64,
    pub episode_end: EpisodeEnd,
    /// Critic target copy is refreshed every this many steps.
    pub target_sync: usize,
    pub weight_rule: WeightRule,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            kind: AgentKind::Crr,
            discount: 0.99,
            episode_end: EpisodeEnd::Terminal,
            target_sync: 200,
            weight_rule: WeightRule::Binary,
            steps: 2000,
            batch_size: 128,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config(format!("discount {} not in (0, 1]", self.discount)));
        }
        if let WeightRule::Exponential { beta } = self.weight_rule {
            if !(beta > 0.0 && beta.is_finite()) {
                return Err(Error::Config(format!("temperature {beta} must be positive")));
            }
        }
        if self.batch_size == 0 || self.target_sync == 0 {
            return Err(Error::Config("batch_size and target_sync must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        Ok(())
    }

    fn sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = vec![input];
        s.extend_from_slice(&self.hidden);
        s.push(output);
        s
    }

    pub fn new_policy(&self, obs_dim: usize, num_actions: usize) -> Result<Mlp> {
        Mlp::new(
            &self.sizes(obs_dim, num_actions),
            Head::Softmax,
            seed::derive_str(self.seed, "policy-init"),
        )
    }

    pub fn new_critic(&self, obs_dim: usize, num_actions: usize) -> Result<Mlp> {
        Mlp::new(
            &self.sizes(obs_dim, num_actions),
            Head::Linear,
            seed::derive_str(self.seed, "critic-init"),
        )
    }
}

/// Logged transitions `(s, a, r, s', terminal)` in flat row-major storage.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    pub obs_dim: usize,
    pub num_actions: usize,
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl Transitions {
    pub fn new(obs_dim: usize, num_actions: usize) -> Self {
        Transitions {
            obs_dim,
            num_actions,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            terminal: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, s: &[f64], a: usize, r: f64, s_next: &[f64], terminal: bool) -> Result<()> {
        if s.len() != self.obs_dim || s_next.len() != self.obs_dim {
            return Err(Error::Shape {
                expected: self.obs_dim,
                got: s.len().max(s_next.len()),
            });
        }
        if a >= self.num_actions {
            return Err(Error::Data(format!("action {a} out of range")));
        }
        if !r.is_finite() {
            return Err(Error::Data("non-finite reward".into()));
        }
        self.obs.extend_from_slice(s);
        self.next_obs.extend_from_slice(s_next);
        self.actions.push(a);
        self.rewards.push(r);
        self.terminal.push(terminal);
        Ok(())
    }

    /// Transitions of the given episodes with rewards from `rewards`; the
    /// last step of each episode is terminal unless `end` says otherwise.
    pub fn from_dataset(dataset: &Dataset, ids: &[u64], rewards: &RewardTable, end: EpisodeEnd) -> Result<Self> {
        let mut out = Transitions::new(dataset.obs_dim(), NUM_ACTIONS);
        for &id in ids {
            let traj = dataset.get(id)?;
            let r = rewards
                .get(&id)
                .filter(|r| r.len() == traj.len())
                .ok_or_else(|| Error::Data(format!("rewards missing for timesteps of trajectory {id}")))?;
            for t in 1..=traj.len() {
                out.push(
                    traj.observation(t - 1),
                    traj.actions()[t - 1] as usize,
                    r[t - 1],
                    traj.observation(t),
                    end == EpisodeEnd::Terminal && t == traj.len(),
                )?;
            }
        }
        Ok(out)
    }

    /// State-action pairs of the given episodes, without rewards.
    pub fn state_actions(dataset: &Dataset, ids: &[u64]) -> Result<(Vec<f64>, Vec<usize>)> {
        let mut x = Vec::new();
        let mut a = Vec::new();
        for &id in ids {
            let traj = dataset.get(id)?;
            for t in 0..traj.len() {
                x.extend_from_slice(traj.observation(t));
                a.push(traj.actions()[t] as usize);
            }
        }
        Ok((x, a))
    }
}

fn sample_indices(rng: &mut seed::Rng, n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|_| rng.random_range(0..n)).collect()
}

/// Behavioural cloning: minimise the categorical cross-entropy of the logged
/// demonstration actions. Rewards are never consulted.
pub fn bc_train<F>(dataset: &Dataset, demo_ids: &[u64], config: &AgentConfig, mut on_checkpoint: F) -> Result<Mlp>
where
    F: FnMut(usize, &Mlp) -> Result<()>,
{
    config.validate()?;
    if demo_ids.is_empty() {
        return Err(Error::Usage(
            "behavioural cloning needs at least one demonstration".into(),
        ));
    }
    let (x, a) = Transitions::state_actions(dataset, demo_ids)?;
    bc_train_on(&x, &a, dataset.obs_dim(), NUM_ACTIONS, config, &mut on_checkpoint)
}

/// Behavioural cloning on raw state-action arrays.
pub fn bc_train_on<F>(
    x: &[f64],
    actions: &[usize],
    obs_dim: usize,
    num_actions: usize,
    config: &AgentConfig,
    on_checkpoint: &mut F,
) -> Result<Mlp>
where
    F: FnMut(usize, &Mlp) -> Result<()>,
{
    if actions.is_empty() {
        return Err(Error::Usage("behavioural cloning needs at least one sample".into()));
    }
    let mut policy = config.new_policy(obs_dim, num_actions)?;
    let mut opt = Adam::for_net(&policy, config.learning_rate);
    let mut rng = seed::rng(seed::derive_str(config.seed, "bc-batches"));
    let k = config.batch_size;
    let w = vec![1.0 / k as f64; k];
    for step in 1..=config.steps {
        let idx = sample_indices(&mut rng, actions.len(), k);
        let xb = gather_rows(x, obs_dim, &idx);
        let ab: Vec<usize> = idx.iter().map(|&i| actions[i]).collect();
        let (_, g) = weighted_categorical_ce(&policy, xb.view(), &ab, &w)?;
        opt.step(&mut policy, &g)?;
        on_checkpoint(step, &policy)?;
    }
    Ok(policy)
}

/// Action probabilities of a softmax policy for a batch of observations.
pub fn policy_probs(policy: &Mlp, x: ArrayView2<f64>) -> Result<ndarray::Array2<f64>> {
    Ok(crate::nn::softmax_rows(&policy.logits(x)?))
}

#[cfg(test)]
mod tests;
