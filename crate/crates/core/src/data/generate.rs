use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::env::{behaviour_rollout, BehaviourPolicy, GridSpec};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMixEntry {
    pub policy: BehaviourPolicy,
    pub weight: f64,
}

/// The default logging mix: mostly-competent experts, experts that give up
/// early, and uniformly random play.
pub fn default_policy_mix() -> Vec<PolicyMixEntry> {
    vec![
        PolicyMixEntry {
            policy: BehaviourPolicy::Expert { epsilon: 0.2 },
            weight: 0.4,
        },
        PolicyMixEntry {
            policy: BehaviourPolicy::Wandering { switch_t: 3 },
            weight: 0.3,
        },
        PolicyMixEntry {
            policy: BehaviourPolicy::Random,
            weight: 0.3,
        },
    ]
}

/// Roll out `n_episodes` behaviour episodes. Episode `i` gets id `i`; its policy
/// is drawn from `mix` by weight.
pub fn generate_dataset(
    spec: &GridSpec,
    n_episodes: usize,
    mix: &[PolicyMixEntry],
    seed: u64,
) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    if mix.is_empty() {
        return Err(Error::Config("policy mix is empty".into()));
    }
    if n_episodes == 0 {
        return Err(Error::Config("n_episodes must be >= 1".into()));
    }
    for entry in mix {
        entry.policy.validate()?;
        if !(entry.weight > 0.0 && entry.weight.is_finite()) {
            return Err(Error::Config(format!(
                "policy mix weight {} must be positive",
                entry.weight
            )));
        }
    }
    let total: f64 = mix.iter().map(|e| e.weight).sum();
    let mut pick = seed::rng(seed::derive_str(seed, "policy-mix"));
    (0..n_episodes)
        .map(|i| {
            let mut u = pick.random::<f64>() * total;
            let entry = mix
                .iter()
                .find(|e| {
                    u -= e.weight;
                    u < 0.0
                })
                .unwrap_or(&mix[mix.len() - 1]);
            let ep = behaviour_rollout(spec, &entry.policy, seed::derive(seed, i as u64))?;
            Trajectory::new(
                i as u64,
                entry.policy.tag(),
                ep.obs_dim,
                ep.observations,
                ep.actions,
                ep.rewards,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, GtAccess};

    #[test]
    fn optimal_expert_always_succeeds() {
        let spec = GridSpec::default();
        let mix = [PolicyMixEntry {
            policy: BehaviourPolicy::Expert { epsilon: 0.0 },
            weight: 1.0,
        }];
        for seed in 0..20 {
            let ds = generate_dataset(&spec, 1, &mix, seed).unwrap();
            assert_eq!(ds.len(), 1);
            assert!(ds[0].is_success(GtAccess::evaluation()));
        }
    }

    #[test]
    fn random_play_sometimes_succeeds() {
        let spec = GridSpec::default();
        let mix = [PolicyMixEntry {
            policy: BehaviourPolicy::Random,
            weight: 1.0,
        }];
        let ds = Dataset::new(generate_dataset(&spec, 500, &mix, 9).unwrap()).unwrap();
        let rate = ds.success_rate();
        assert!(rate > 0.0 && rate < 0.5, "random success rate {rate}");
    }

    #[test]
    fn default_mix_has_both_outcomes() {
        let spec = GridSpec::default();
        let ds = Dataset::new(generate_dataset(&spec, 500, &default_policy_mix(), 1).unwrap()).unwrap();
        let rate = ds.success_rate();
        assert!(rate > 0.0 && rate < 1.0, "success rate {rate}");
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GridSpec::default();
        let a = generate_dataset(&spec, 30, &default_policy_mix(), 4).unwrap();
        let b = generate_dataset(&spec, 30, &default_policy_mix(), 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_mix_and_bad_weights_rejected() {
        let spec = GridSpec::default();
        assert!(matches!(generate_dataset(&spec, 5, &[], 0), Err(Error::Config(_))));
        let mix = [PolicyMixEntry {
            policy: BehaviourPolicy::Random,
            weight: 0.0,
        }];
        assert!(generate_dataset(&spec, 5, &mix, 0).is_err());
    }
}
