use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Dataset, GtAccess};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionParams {
    /// Probability that a successful reward-pool episode becomes a demonstration.
    pub p_demo: f64,
    /// Share of the dataset available for reward learning.
    pub reward_pool_fraction: f64,
    pub validation_count: usize,
    /// Top up the demonstration set with further successes until it has at
    /// least this many episodes (when enough successes exist).
    pub min_demos: usize,
    pub seed: u64,
}

impl Default for PartitionParams {
    fn default() -> Self {
        PartitionParams {
            p_demo: 1.0 / 16.0,
            reward_pool_fraction: 0.5,
            validation_count: 40,
            min_demos: 0,
            seed: 0,
        }
    }
}

/// Id lists describing how a dataset is used. All lists are sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetPartition {
    /// Episodes available for reward learning.
    pub reward_pool_ids: Vec<u64>,
    /// Episodes used for policy learning (the whole dataset).
    pub policy_pool_ids: Vec<u64>,
    /// Demonstrations: successful reward-pool episodes.
    pub demo_ids: Vec<u64>,
    /// Reward-pool episodes that are not demonstrations.
    pub unlabeled_ids: Vec<u64>,
    /// Stratified halves of the reward pool used by cross-refinement.
    pub half_a_ids: Vec<u64>,
    pub half_b_ids: Vec<u64>,
    /// Unlabelled episodes whose timestep labels may be used for scoring.
    pub validation_ids: Vec<u64>,
}

impl DatasetPartition {
    /// Check the structural invariants. Does not look at rewards.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        use std::collections::BTreeSet;
        let set = |v: &[u64]| v.iter().copied().collect::<BTreeSet<_>>();
        let pool = set(&self.reward_pool_ids);
        let demo = set(&self.demo_ids);
        let unl = set(&self.unlabeled_ids);
        let a = set(&self.half_a_ids);
        let b = set(&self.half_b_ids);
        let all = set(&self.policy_pool_ids);
        let lists: [&[u64]; 7] = [
            &self.reward_pool_ids,
            &self.policy_pool_ids,
            &self.demo_ids,
            &self.unlabeled_ids,
            &self.half_a_ids,
            &self.half_b_ids,
            &self.validation_ids,
        ];
        for list in lists {
            if let Some(&id) = list.iter().find(|&&id| !dataset.contains(id)) {
                return Err(Error::Lookup(id));
            }
        }
        if !demo.is_disjoint(&unl) || demo.union(&unl).copied().collect::<BTreeSet<_>>() != pool {
            return Err(Error::Partition(
                "demonstrations and unlabelled episodes must partition the reward pool".into(),
            ));
        }
        if !a.is_disjoint(&b) || a.union(&b).copied().collect::<BTreeSet<_>>() != pool {
            return Err(Error::Partition("halves A and B must partition the reward pool".into()));
        }
        if !pool.is_subset(&all) {
            return Err(Error::Partition("reward pool must lie inside the policy pool".into()));
        }
        if !set(&self.validation_ids).is_subset(&unl) {
            return Err(Error::Partition("validation episodes must be unlabelled".into()));
        }
        Ok(())
    }

    pub fn demos_in(&self, half: &[u64]) -> Vec<u64> {
        intersect(half, &self.demo_ids)
    }

    pub fn unlabeled_in(&self, half: &[u64]) -> Vec<u64> {
        intersect(half, &self.unlabeled_ids)
    }
}

fn intersect(a: &[u64], b: &[u64]) -> Vec<u64> {
    a.iter().filter(|id| b.binary_search(id).is_ok()).copied().collect()
}

fn sorted(mut v: Vec<u64>) -> Vec<u64> {
    v.sort_unstable();
    v
}

/// Split a dataset into reward pool, demonstrations, refinement halves and
/// validation episodes. Reading episode success counts as annotation.
pub fn partition(dataset: &Dataset, params: &PartitionParams) -> Result<DatasetPartition> {
    if !(params.p_demo > 0.0 && params.p_demo <= 1.0) {
        return Err(Error::Config(format!("p_demo {} not in (0, 1]", params.p_demo)));
    }
    if !(params.reward_pool_fraction > 0.0 && params.reward_pool_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "reward_pool_fraction {} not in (0, 1]",
            params.reward_pool_fraction
        )));
    }
    let mut rng = seed::rng(seed::derive_str(params.seed, "partition"));
    let all = sorted(dataset.ids());

    let mut shuffled = all.clone();
    shuffled.shuffle(&mut rng);
    let pool_len = ((all.len() as f64 * params.reward_pool_fraction).round() as usize).clamp(1, all.len());
    let pool = sorted(shuffled[..pool_len].to_vec());

    let access = GtAccess::annotation();
    let mut successes = Vec::new();
    for &id in &pool {
        if dataset.get(id)?.is_success(access) {
            successes.push(id);
        }
    }
    if successes.is_empty() {
        return Err(Error::Partition(
            "the reward pool holds no successful episodes; generate more episodes or use an easier grid".into(),
        ));
    }

    let mut demo = Vec::new();
    let mut rest = Vec::new();
    for &id in &successes {
        if rng.random::<f64>() < params.p_demo {
            demo.push(id);
        } else {
            rest.push(id);
        }
    }
    if demo.len() < params.min_demos {
        rest.shuffle(&mut rng);
        let extra = (params.min_demos - demo.len()).min(rest.len());
        demo.extend_from_slice(&rest[..extra]);
    }
    if demo.is_empty() {
        // Always keep at least one demonstration so every strategy is defined.
        demo.push(successes[rng.random_range(0..successes.len())]);
    }
    let demo = sorted(demo);
    let unlabeled: Vec<u64> = pool
        .iter()
        .filter(|id| demo.binary_search(id).is_err())
        .copied()
        .collect();

    let (mut half_a, mut half_b) = (Vec::new(), Vec::new());
    for stratum in [&demo, &unlabeled] {
        let mut s = stratum.to_vec();
        s.shuffle(&mut rng);
        let cut = s.len().div_ceil(2);
        half_a.extend_from_slice(&s[..cut]);
        half_b.extend_from_slice(&s[cut..]);
    }

    let mut val = unlabeled.clone();
    val.shuffle(&mut rng);
    val.truncate(params.validation_count);

    Ok(DatasetPartition {
        reward_pool_ids: pool,
        policy_pool_ids: all,
        demo_ids: demo,
        unlabeled_ids: unlabeled,
        half_a_ids: sorted(half_a),
        half_b_ids: sorted(half_b),
        validation_ids: sorted(val),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_policy_mix, generate_dataset, Trajectory};
    use crate::env::GridSpec;

    fn small_dataset(n: usize, seed: u64) -> Dataset {
        Dataset::new(generate_dataset(&GridSpec::default(), n, &default_policy_mix(), seed).unwrap()).unwrap()
    }

    #[test]
    fn full_inclusion_splits_by_outcome() {
        let ds = small_dataset(200, 1);
        let p = partition(
            &ds,
            &PartitionParams {
                p_demo: 1.0,
                reward_pool_fraction: 1.0,
                ..Default::default()
            },
        )
        .unwrap();
        p.validate(&ds).unwrap();
        for t in ds.trajectories() {
            let s = t.is_success(GtAccess::evaluation());
            assert_eq!(p.demo_ids.binary_search(&t.id()).is_ok(), s);
            assert_eq!(p.unlabeled_ids.binary_search(&t.id()).is_ok(), !s);
        }
    }

    #[test]
    fn halves_partition_the_pool() {
        let ds = small_dataset(300, 2);
        let p = partition(&ds, &PartitionParams::default()).unwrap();
        assert_eq!(p.half_a_ids.len() + p.half_b_ids.len(), p.reward_pool_ids.len());
        assert!(intersect(&p.half_a_ids, &p.half_b_ids).is_empty());
        assert_eq!(p.reward_pool_ids.len(), 150);
        assert_eq!(p.policy_pool_ids.len(), 300);
        // Stratification: each half gets ceil/floor of each stratum.
        let da = p.demos_in(&p.half_a_ids).len();
        let db = p.demos_in(&p.half_b_ids).len();
        assert!(da == db || da == db + 1);
    }

    #[test]
    fn demo_count_matches_binomial_rate() {
        // 8000 synthetic episodes, 40% successful; half go to the reward pool.
        let trajs: Vec<Trajectory> = (0..8000u64)
            .map(|i| {
                let r = u8::from(i % 5 < 2);
                Trajectory::new(i, "synthetic", 1, vec![0.0, 0.0], vec![0], vec![r]).unwrap()
            })
            .collect();
        let ds = Dataset::new(trajs).unwrap();
        let p = partition(
            &ds,
            &PartitionParams {
                p_demo: 1.0 / 16.0,
                reward_pool_fraction: 0.5,
                ..Default::default()
            },
        )
        .unwrap();
        let successes_in_pool = p.reward_pool_ids.iter().filter(|&&id| id % 5 < 2).count() as f64;
        let mean = successes_in_pool / 16.0;
        let sd = (successes_in_pool * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        let n = p.demo_ids.len() as f64;
        assert!((n - mean).abs() <= 3.0 * sd, "{n} demos vs mean {mean} sd {sd}");
        assert!((n - 100.0).abs() <= 3.0 * 9.7);
    }

    #[test]
    fn no_successes_is_partition_error() {
        let trajs: Vec<Trajectory> = (0..10u64)
            .map(|i| Trajectory::new(i, "x", 1, vec![0.0, 0.0], vec![0], vec![0]).unwrap())
            .collect();
        let ds = Dataset::new(trajs).unwrap();
        assert!(matches!(
            partition(&ds, &PartitionParams::default()),
            Err(Error::Partition(_))
        ));
    }

    #[test]
    fn min_demos_tops_up() {
        let ds = small_dataset(300, 3);
        let p = partition(
            &ds,
            &PartitionParams {
                p_demo: 1.0 / 128.0,
                min_demos: 8,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(p.demo_ids.len() >= 8);
        p.validate(&ds).unwrap();
    }

    #[test]
    fn invariants_hold_across_seeds() {
        let ds = small_dataset(120, 4);
        for seed in 0..1000u64 {
            let params = PartitionParams {
                p_demo: [1.0, 0.5, 1.0 / 16.0][seed as usize % 3],
                reward_pool_fraction: [0.5, 1.0, 0.3][seed as usize % 3],
                validation_count: 10,
                min_demos: 0,
                seed,
            };
            let p = partition(&ds, &params).unwrap();
            p.validate(&ds).unwrap();
            for &id in &p.demo_ids {
                assert!(ds.get(id).unwrap().is_success(GtAccess::evaluation()));
            }
            assert!(p.validation_ids.len() <= 10);
        }
    }

    #[test]
    fn bad_params_rejected() {
        let ds = small_dataset(20, 5);
        for (p_demo, frac) in [(0.0, 0.5), (1.5, 0.5), (0.5, 0.0), (0.5, 1.1)] {
            let params = PartitionParams {
                p_demo,
                reward_pool_fraction: frac,
                ..Default::default()
            };
            assert!(partition(&ds, &params).is_err());
        }
    }
}
