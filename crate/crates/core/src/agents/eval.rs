use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::env::{self, Action, EnvState, GridSpec, NUM_ACTIONS};
use crate::error::{Error, Result};
use crate::nn::{Head, Mlp};
use crate::seed;

/// Anything that maps an observation to a distribution over actions.
pub trait Policy {
    fn input_dim(&self) -> usize;
    fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>>;
}

impl Policy for Mlp {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        if self.head() != Head::Softmax {
            return Err(Error::Usage("policy network needs a softmax head".into()));
        }
        self.probs_one(obs)
    }
}

/// Deterministic policy keyed on the (agent, goal) one-hot blocks of an
/// observation. Unknown states fall back to `Stay`.
#[derive(Clone, Debug, Default)]
pub struct TablePolicy {
    pub obs_dim: usize,
    pub cells: usize,
    pub table: HashMap<(usize, usize), usize>,
}

impl TablePolicy {
    /// Shortest-path policy for every agent/goal pair of `spec`.
    pub fn shortest_path(spec: &GridSpec) -> Self {
        let n = spec.num_cells();
        let mut table = HashMap::new();
        for a in 0..n {
            for g in 0..n {
                let cell = |i: usize| env::Cell::new(i % spec.width, i / spec.width);
                if let Ok(s) = EnvState::with_cells(spec, cell(a), cell(g), 0) {
                    table.insert((a, g), env::expert_action(&s).id());
                }
            }
        }
        TablePolicy {
            obs_dim: spec.obs_dim(),
            cells: n,
            table,
        }
    }
}

fn one_hot_index(block: &[f64]) -> Option<usize> {
    block.iter().position(|&v| v == 1.0)
}

impl Policy for TablePolicy {
    fn input_dim(&self) -> usize {
        self.obs_dim
    }

    fn action_probs(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let a = one_hot_index(&obs[..self.cells]);
        let g = one_hot_index(&obs[self.cells..2 * self.cells]);
        let action = match (a, g) {
            (Some(a), Some(g)) => self.table.get(&(a, g)).copied().unwrap_or(Action::Stay.id()),
            _ => Action::Stay.id(),
        };
        let mut p = vec![0.0; NUM_ACTIONS];
        p[action] = 1.0;
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Most probable action, lowest id on ties.
    Greedy,
    /// Action drawn from the policy distribution.
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Sum of environment rewards per episode, averaged.
    pub mean_return: f64,
    pub success_rate: f64,
    pub episodes: usize,
    pub seed: u64,
}

fn choose(probs: &[f64], mode: EvalMode, rng: &mut seed::Rng) -> usize {
    match mode {
        EvalMode::Greedy => {
            let mut best = 0;
            for (i, &p) in probs.iter().enumerate() {
                if p > probs[best] {
                    best = i;
                }
            }
            best
        }
        EvalMode::Sampled => {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        }
    }
}

/// Roll the policy out for `n_episodes` fresh episodes of the true
/// environment. Episode `i` uses a seed derived from `(seed, i)`, so the
/// report does not depend on evaluation order.
pub fn evaluate_policy<P: Policy + ?Sized>(
    policy: &P,
    spec: &GridSpec,
    n_episodes: usize,
    seed: u64,
    mode: EvalMode,
) -> Result<EvalReport> {
    if n_episodes == 0 {
        return Err(Error::Usage("evaluation needs at least one episode".into()));
    }
    if policy.input_dim() != spec.obs_dim() {
        return Err(Error::Shape {
            expected: spec.obs_dim(),
            got: policy.input_dim(),
        });
    }
    let mut total_return = 0.0;
    let mut successes = 0usize;
    let mut failure: Option<Error> = None;
    for i in 0..n_episodes {
        let ep_seed = seed::derive(seed::derive_str(seed, "eval"), i as u64);
        let ep = env::rollout(spec, ep_seed, |_, obs, rng| match policy.action_probs(obs) {
            Ok(p) => Action::ALL[choose(&p, mode, rng)],
            Err(e) => {
                failure.get_or_insert(e);
                Action::Stay
            }
        })?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let ret: u32 = ep.rewards.iter().map(|&r| u32::from(r)).sum();
        total_return += f64::from(ret);
        successes += usize::from(ret > 0);
    }
    Ok(EvalReport {
        mean_return: total_return / n_episodes as f64,
        success_rate: successes as f64 / n_episodes as f64,
        episodes: n_episodes,
        seed,
    })
}
