//! Trajectories, datasets, annotation simulation and partitioning.
//!
//! Ground-truth rewards live inside [`Trajectory`] but can only be read by
//! presenting a [`GtAccess`] token naming the purpose of the read. Every read
//! is tallied in a thread-local audit so tests can prove that reward-learning
//! code never touches ground truth.

mod annotate;
mod generate;
pub mod io;
mod partition;

use std::collections::HashMap;

pub use annotate::{annotate_timesteps, Annotator, TimestepAnnotation};
pub use generate::{default_policy_mix, generate_dataset, PolicyMixEntry};
pub use partition::{partition, DatasetPartition, PartitionParams};

use crate::error::{Error, Result};

/// Why ground truth is being read. Only these purposes exist.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GtPurpose {
    /// Episode- or timestep-level annotation simulation.
    Annotation,
    /// Scoring reward models on the annotated validation set.
    Validation,
    /// Training the ground-truth-reward reference agent.
    GtAgent,
    /// Rollout evaluation and dataset statistics.
    Evaluation,
    /// Writing datasets to disk.
    Persistence,
}

impl GtPurpose {
    const ALL: [GtPurpose; 5] = [
        GtPurpose::Annotation,
        GtPurpose::Validation,
        GtPurpose::GtAgent,
        GtPurpose::Evaluation,
        GtPurpose::Persistence,
    ];

    fn slot(self) -> usize {
        self as usize
    }
}

/// Capability token required to read ground-truth rewards.
#[derive(Clone, Copy, Debug)]
pub struct GtAccess(GtPurpose);

impl GtAccess {
    pub fn annotation() -> Self {
        GtAccess(GtPurpose::Annotation)
    }
    pub fn validation() -> Self {
        GtAccess(GtPurpose::Validation)
    }
    pub fn gt_agent() -> Self {
        GtAccess(GtPurpose::GtAgent)
    }
    pub fn evaluation() -> Self {
        GtAccess(GtPurpose::Evaluation)
    }
    pub fn persistence() -> Self {
        GtAccess(GtPurpose::Persistence)
    }
    pub fn purpose(&self) -> GtPurpose {
        self.0
    }
}

/// Thread-local tally of ground-truth reads, keyed by purpose.
pub mod audit {
    use super::GtPurpose;
    use std::cell::Cell;

    thread_local! {
        static READS: [Cell<u64>; 5] = Default::default();
    }

    pub(crate) fn record(purpose: GtPurpose) {
        READS.with(|r| {
            let c = &r[purpose.slot()];
            c.set(c.get() + 1);
        });
    }

    pub fn reset() {
        READS.with(|r| r.iter().for_each(|c| c.set(0)));
    }

    pub fn reads(purpose: GtPurpose) -> u64 {
        READS.with(|r| r[purpose.slot()].get())
    }

    pub fn total() -> u64 {
        GtPurpose::ALL.iter().map(|&p| reads(p)).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    id: u64,
    behaviour: String,
    obs_dim: usize,
    /// `len() + 1` rows: the initial observation then one per step.
    observations: Vec<f64>,
    actions: Vec<u8>,
    gt_rewards: Vec<u8>,
}

impl Trajectory {
    pub fn new(
        id: u64,
        behaviour: impl Into<String>,
        obs_dim: usize,
        observations: Vec<f64>,
        actions: Vec<u8>,
        gt_rewards: Vec<u8>,
    ) -> Result<Self> {
        let t = actions.len();
        if t == 0 {
            return Err(Error::Data(format!("trajectory {id} is empty")));
        }
        if gt_rewards.len() != t {
            return Err(Error::Data(format!(
                "trajectory {id}: {} rewards for {t} actions",
                gt_rewards.len()
            )));
        }
        if obs_dim == 0 || observations.len() != (t + 1) * obs_dim {
            return Err(Error::Data(format!(
                "trajectory {id}: {} observation values, expected {} rows of {obs_dim}",
                observations.len(),
                t + 1
            )));
        }
        if let Some(&a) = actions.iter().find(|&&a| a as usize >= crate::env::NUM_ACTIONS) {
            return Err(Error::Data(format!("trajectory {id}: invalid action {a}")));
        }
        if let Some(&r) = gt_rewards.iter().find(|&&r| r > 1) {
            return Err(Error::Data(format!("trajectory {id}: reward {r} is not a bit")));
        }
        Ok(Trajectory {
            id,
            behaviour: behaviour.into(),
            obs_dim,
            observations,
            actions,
            gt_rewards,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn behaviour(&self) -> &str {
        &self.behaviour
    }

    /// Number of transitions `T`.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    /// Observation row `i` for `i in 0..=len()`; row 0 is the initial state.
    pub fn observation(&self, i: usize) -> &[f64] {
        &self.observations[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// The state `s_t` that reward `r_t` describes, for 1-based `t`.
    pub fn reward_state(&self, t: usize) -> &[f64] {
        debug_assert!(t >= 1 && t <= self.len());
        self.observation(t)
    }

    pub fn actions(&self) -> &[u8] {
        &self.actions
    }

    pub fn ground_truth(&self, access: GtAccess) -> &[u8] {
        audit::record(access.purpose());
        &self.gt_rewards
    }

    /// Success means some timestep carries a positive reward.
    pub fn is_success(&self, access: GtAccess) -> bool {
        self.ground_truth(access).contains(&1)
    }
}

/// An immutable pool of trajectories with id lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    trajectories: Vec<Trajectory>,
    index: HashMap<u64, usize>,
}

impl Dataset {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self> {
        let mut index = HashMap::with_capacity(trajectories.len());
        let dim = trajectories.first().map(|t| t.obs_dim());
        for (i, t) in trajectories.iter().enumerate() {
            if Some(t.obs_dim()) != dim {
                return Err(Error::Data(format!(
                    "trajectory {} has observation dimension {}, dataset uses {}",
                    t.id(),
                    t.obs_dim(),
                    dim.unwrap_or(0)
                )));
            }
            if index.insert(t.id(), i).is_some() {
                return Err(Error::Data(format!("duplicate trajectory id {}", t.id())));
            }
        }
        Ok(Dataset { trajectories, index })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.obs_dim())
    }

    pub fn ids(&self) -> Vec<u64> {
        self.trajectories.iter().map(|t| t.id()).collect()
    }

    pub fn get(&self, id: u64) -> Result<&Trajectory> {
        self.index
            .get(&id)
            .map(|&i| &self.trajectories[i])
            .ok_or(Error::Lookup(id))
    }

    pub fn contains(&self, id: u64) -> bool {
        self.index.contains_key(&id)
    }

    /// Fraction of successful episodes. Reads ground truth for evaluation.
    pub fn success_rate(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let n = self
            .trajectories
            .iter()
            .filter(|t| t.is_success(GtAccess::evaluation()))
            .count();
        n as f64 / self.len() as f64
    }
}
