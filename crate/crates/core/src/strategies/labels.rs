use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TimestepAnnotation};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hardness {
    Hard,
    Soft,
}

/// Which expectation of the training objective a labelled timestep belongs to.
/// Each group present in a label set contributes one equally weighted term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelGroup {
    /// Every timestep of a demonstration (flat positive labels).
    Demo,
    /// Demonstration timesteps up to the time threshold.
    DemoEarly,
    /// Demonstration timesteps after the time threshold.
    DemoLate,
    /// Flat zero labels on unlabelled episodes.
    Unlabeled,
    /// Timestep annotations.
    Annotated,
    /// Soft labels predicted by a teacher model.
    Predicted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLabels {
    /// `targets[t - 1]` is the label of 1-based timestep `t`.
    pub targets: Vec<f64>,
    pub groups: Vec<LabelGroup>,
}

impl TrajectoryLabels {
    fn uniform(len: usize, target: f64, group: LabelGroup) -> Self {
        TrajectoryLabels {
            targets: vec![target; len],
            groups: vec![group; len],
        }
    }
}

/// Synthetic per-timestep training targets in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLabelSet {
    pub hardness: Hardness,
    pub labels: BTreeMap<u64, TrajectoryLabels>,
}

impl SyntheticLabelSet {
    pub fn ids(&self) -> Vec<u64> {
        self.labels.keys().copied().collect()
    }

    pub fn num_timesteps(&self) -> usize {
        self.labels.values().map(|l| l.targets.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_timesteps() == 0
    }

    pub fn get(&self, id: u64) -> Option<&TrajectoryLabels> {
        self.labels.get(&id)
    }

    pub fn groups(&self) -> BTreeSet<LabelGroup> {
        self.labels.values().flat_map(|l| l.groups.iter().copied()).collect()
    }

    /// Union of two label sets over disjoint trajectories.
    pub fn merge(mut self, other: SyntheticLabelSet) -> Result<SyntheticLabelSet> {
        for (id, l) in other.labels {
            if self.labels.insert(id, l).is_some() {
                return Err(Error::Partition(format!("trajectory {id} labelled twice")));
            }
        }
        if other.hardness == Hardness::Soft {
            self.hardness = Hardness::Soft;
        }
        Ok(self)
    }
}

fn check_disjoint(demo_ids: &[u64], unlabeled_ids: &[u64]) -> Result<()> {
    let demo: BTreeSet<u64> = demo_ids.iter().copied().collect();
    if let Some(id) = unlabeled_ids.iter().find(|id| demo.contains(id)) {
        return Err(Error::Partition(format!(
            "trajectory {id} is both a demonstration and unlabelled"
        )));
    }
    Ok(())
}

fn zeros_for(dataset: &Dataset, ids: &[u64], out: &mut BTreeMap<u64, TrajectoryLabels>) -> Result<()> {
    for &id in ids {
        let len = dataset.get(id)?.len();
        out.insert(id, TrajectoryLabels::uniform(len, 0.0, LabelGroup::Unlabeled));
    }
    Ok(())
}

/// Flat labels: every demonstration timestep is 1, every unlabelled one 0.
pub fn sqil_labels(dataset: &Dataset, demo_ids: &[u64], unlabeled_ids: &[u64]) -> Result<SyntheticLabelSet> {
    check_disjoint(demo_ids, unlabeled_ids)?;
    let mut labels = BTreeMap::new();
    for &id in demo_ids {
        let len = dataset.get(id)?.len();
        labels.insert(id, TrajectoryLabels::uniform(len, 1.0, LabelGroup::Demo));
    }
    zeros_for(dataset, unlabeled_ids, &mut labels)?;
    Ok(SyntheticLabelSet {
        hardness: Hardness::Hard,
        labels,
    })
}

/// Time-guided labels: demonstration timestep `t` (1-based) is 0 for
/// `t <= t0` and 1 after; unlabelled timesteps are 0.
pub fn tgr_labels(dataset: &Dataset, demo_ids: &[u64], unlabeled_ids: &[u64], t0: usize) -> Result<SyntheticLabelSet> {
    check_disjoint(demo_ids, unlabeled_ids)?;
    let mut labels = BTreeMap::new();
    for &id in demo_ids {
        let len = dataset.get(id)?.len();
        let (targets, groups) = (1..=len)
            .map(|t| {
                if t <= t0 {
                    (0.0, LabelGroup::DemoEarly)
                } else {
                    (1.0, LabelGroup::DemoLate)
                }
            })
            .unzip();
        labels.insert(id, TrajectoryLabels { targets, groups });
    }
    zeros_for(dataset, unlabeled_ids, &mut labels)?;
    Ok(SyntheticLabelSet {
        hardness: Hardness::Hard,
        labels,
    })
}

fn annotated(dataset: &Dataset, annotations: &TimestepAnnotation) -> Result<BTreeMap<u64, TrajectoryLabels>> {
    let mut labels = BTreeMap::new();
    for (&id, bits) in annotations {
        let len = dataset.get(id)?.len();
        if bits.len() != len {
            return Err(Error::Data(format!(
                "annotation of trajectory {id} has {} labels for {len} timesteps",
                bits.len()
            )));
        }
        labels.insert(
            id,
            TrajectoryLabels {
                targets: bits.iter().map(|&b| f64::from(b)).collect(),
                groups: vec![LabelGroup::Annotated; len],
            },
        );
    }
    Ok(labels)
}

/// Supervised labels from timestep annotations only.
pub fn sup_demo_labels(dataset: &Dataset, annotations: &TimestepAnnotation) -> Result<SyntheticLabelSet> {
    Ok(SyntheticLabelSet {
        hardness: Hardness::Hard,
        labels: annotated(dataset, annotations)?,
    })
}

/// Timestep annotations plus flat zero labels on the unlabelled episodes.
pub fn sup_and_flat_labels(
    dataset: &Dataset,
    annotations: &TimestepAnnotation,
    unlabeled_ids: &[u64],
) -> Result<SyntheticLabelSet> {
    let annotated_ids: Vec<u64> = annotations.keys().copied().collect();
    check_disjoint(&annotated_ids, unlabeled_ids)?;
    let mut labels = annotated(dataset, annotations)?;
    zeros_for(dataset, unlabeled_ids, &mut labels)?;
    Ok(SyntheticLabelSet {
        hardness: Hardness::Hard,
        labels,
    })
}
