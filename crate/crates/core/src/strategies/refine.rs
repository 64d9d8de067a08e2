//! Cross-split iterative refinement. Two classifiers are trained on disjoint
//! halves of the reward pool; each generation relabels one half with the
//! frozen classifier of the previous generation from the other half.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView2;

use super::labels::{tgr_labels, Hardness, LabelGroup, SyntheticLabelSet, TrajectoryLabels};
use super::train::{train_on_labels, SampleLog};
use crate::data::{Dataset, DatasetPartition};
use crate::error::{Error, Result};
use crate::nn::{clamp_prob, sigmoid, Mlp, TrainSpec};
use crate::seed;

#[derive(Clone, Debug, PartialEq)]
pub struct RefinementState {
    /// Classifier trained on half A only.
    pub a: Mlp,
    /// Classifier trained on half B only.
    pub b: Mlp,
    pub iteration: usize,
    /// The labels `a` was trained on.
    pub labels_a: SyntheticLabelSet,
    /// The labels `b` was trained on.
    pub labels_b: SyntheticLabelSet,
}

fn half_spec(spec: &TrainSpec, iteration: usize, half: &str) -> TrainSpec {
    let mut s = spec.clone();
    s.seed = seed::derive_str(seed::derive(spec.seed, iteration as u64), half);
    s
}

fn check_halves(dataset: &Dataset, partition: &DatasetPartition) -> Result<()> {
    let a: BTreeSet<u64> = partition.half_a_ids.iter().copied().collect();
    if partition.half_b_ids.iter().any(|id| a.contains(id)) {
        return Err(Error::Partition("refinement halves overlap".into()));
    }
    if partition.half_a_ids.is_empty() || partition.half_b_ids.is_empty() {
        return Err(Error::Partition("refinement needs two non-empty halves".into()));
    }
    for &id in partition.half_a_ids.iter().chain(&partition.half_b_ids) {
        dataset.get(id)?;
    }
    Ok(())
}

/// Iteration 0: each half gets its own time-guided classifier.
pub fn bootstrap(
    dataset: &Dataset,
    partition: &DatasetPartition,
    t0: usize,
    spec: &TrainSpec,
) -> Result<RefinementState> {
    check_halves(dataset, partition)?;
    let half_labels = |half: &[u64]| tgr_labels(dataset, &partition.demos_in(half), &partition.unlabeled_in(half), t0);
    let labels_a = half_labels(&partition.half_a_ids)?;
    let labels_b = half_labels(&partition.half_b_ids)?;
    let a = train_on_labels(dataset, &labels_a, &half_spec(spec, 0, "a"), None)?;
    let b = train_on_labels(dataset, &labels_b, &half_spec(spec, 0, "b"), None)?;
    Ok(RefinementState {
        a,
        b,
        iteration: 0,
        labels_a,
        labels_b,
    })
}

/// Soft labels for every timestep of `ids`, predicted by a frozen teacher.
fn teacher_labels(dataset: &Dataset, teacher: &Mlp, ids: &[u64], eps: f64) -> Result<SyntheticLabelSet> {
    let mut labels = BTreeMap::new();
    for &id in ids {
        let traj = dataset.get(id)?;
        let rows = &traj.observations()[traj.obs_dim()..];
        let x = ArrayView2::from_shape((traj.len(), traj.obs_dim()), rows).expect("reward states");
        let targets: Vec<f64> = teacher
            .logits(x)?
            .iter()
            .map(|&z| clamp_prob(sigmoid(z), eps))
            .collect();
        labels.insert(
            id,
            TrajectoryLabels {
                groups: vec![LabelGroup::Predicted; targets.len()],
                targets,
            },
        );
    }
    Ok(SyntheticLabelSet {
        hardness: Hardness::Soft,
        labels,
    })
}

fn label_ids_match(labels: &SyntheticLabelSet, half: &[u64]) -> bool {
    labels.labels.keys().copied().eq(half.iter().copied())
}

/// One refinement generation. Half A is relabelled by the previous B model
/// and vice versa; the new models start from fresh initialisations whose
/// seeds depend on the base seed, the iteration and the half. The previous
/// models are only read.
pub fn refine(
    dataset: &Dataset,
    partition: &DatasetPartition,
    state: &RefinementState,
    spec: &TrainSpec,
    log_a: Option<&mut SampleLog>,
    log_b: Option<&mut SampleLog>,
) -> Result<RefinementState> {
    check_halves(dataset, partition)?;
    if !label_ids_match(&state.labels_a, &partition.half_a_ids)
        || !label_ids_match(&state.labels_b, &partition.half_b_ids)
    {
        return Err(Error::Partition(
            "refinement state was built on different halves".into(),
        ));
    }
    let i = state.iteration + 1;
    let labels_a = teacher_labels(dataset, &state.b, &partition.half_a_ids, spec.prob_clamp)?;
    let labels_b = teacher_labels(dataset, &state.a, &partition.half_b_ids, spec.prob_clamp)?;
    let a = train_on_labels(dataset, &labels_a, &half_spec(spec, i, "a"), log_a)?;
    let b = train_on_labels(dataset, &labels_b, &half_spec(spec, i, "b"), log_b)?;
    Ok(RefinementState {
        a,
        b,
        iteration: i,
        labels_a,
        labels_b,
    })
}

/// Bootstrap then refine `iters` times. Returns the state of every
/// iteration, starting with iteration 0.
pub fn refine_iterations(
    dataset: &Dataset,
    partition: &DatasetPartition,
    t0: usize,
    iters: usize,
    spec: &TrainSpec,
) -> Result<Vec<RefinementState>> {
    let mut states = vec![bootstrap(dataset, partition, t0, spec)?];
    for _ in 0..iters {
        let next = refine(dataset, partition, states.last().expect("state"), spec, None, None)?;
        states.push(next);
    }
    Ok(states)
}

/// Mean of the two half-model probabilities.
pub fn ensemble_predict(state: &RefinementState, x: &[f64], eps: f64) -> Result<f64> {
    Ok(0.5 * (state.a.forward_prob(x, eps)? + state.b.forward_prob(x, eps)?))
}
