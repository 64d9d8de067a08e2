//! Mini-batch trainers for the reward classifier.
//!
//! Both objectives are sums of per-group expectations. Every step draws an
//! equal share of the batch from each group (uniformly, with replacement) and
//! weights each sample by the inverse of its group's batch share, so the
//! batch loss is an unbiased estimate of the sum of group means.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use rand::Rng as _;

use super::labels::{LabelGroup, SyntheticLabelSet};
use super::OrilReg;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::loss::{bce_terms, weighted_bce_loss_and_grad};
use crate::nn::{gather_rows, Adam, Head, Mlp, TrainSpec};
use crate::seed;

/// Records which trajectories a training run drew samples from.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SampleLog {
    pub ids: BTreeSet<u64>,
}

/// Reward-state rows, targets and owners of one label group.
struct GroupRows {
    x: Vec<f64>,
    targets: Vec<f64>,
    owners: Vec<u64>,
}

impl GroupRows {
    fn len(&self) -> usize {
        self.owners.len()
    }
}

fn collect_groups(dataset: &Dataset, labels: &SyntheticLabelSet) -> Result<Vec<GroupRows>> {
    let mut groups: BTreeMap<LabelGroup, GroupRows> = BTreeMap::new();
    for (&id, l) in &labels.labels {
        let traj = dataset.get(id)?;
        if l.targets.len() != traj.len() || l.groups.len() != traj.len() {
            return Err(Error::Data(format!(
                "labels of trajectory {id} do not cover its {} timesteps",
                traj.len()
            )));
        }
        for t in 1..=traj.len() {
            let g = groups.entry(l.groups[t - 1]).or_insert_with(|| GroupRows {
                x: Vec::new(),
                targets: Vec::new(),
                owners: Vec::new(),
            });
            g.x.extend_from_slice(traj.reward_state(t));
            g.targets.push(l.targets[t - 1]);
            g.owners.push(id);
        }
    }
    Ok(groups.into_values().filter(|g| g.len() > 0).collect())
}

fn rows_of(dataset: &Dataset, ids: &[u64]) -> Result<GroupRows> {
    let mut g = GroupRows {
        x: Vec::new(),
        targets: Vec::new(),
        owners: Vec::new(),
    };
    for &id in ids {
        let traj = dataset.get(id)?;
        for t in 1..=traj.len() {
            g.x.extend_from_slice(traj.reward_state(t));
            g.owners.push(id);
        }
    }
    Ok(g)
}

fn fresh_reward_net(dataset: &Dataset, spec: &TrainSpec) -> Result<Mlp> {
    Mlp::new(
        &spec.layer_sizes(dataset.obs_dim(), 1),
        Head::Logistic,
        seed::derive_str(spec.seed, "reward-init"),
    )
}

/// Number of samples drawn from each of `groups` groups per step.
fn per_group(spec: &TrainSpec, groups: usize) -> usize {
    (spec.batch_size / groups).max(1)
}

/// Minimise the label objective: the sum over label groups of the mean
/// cross-entropy against the (hard or soft) targets.
pub fn train_on_labels(
    dataset: &Dataset,
    labels: &SyntheticLabelSet,
    spec: &TrainSpec,
    mut log: Option<&mut SampleLog>,
) -> Result<Mlp> {
    spec.validate()?;
    let groups = collect_groups(dataset, labels)?;
    if groups.is_empty() {
        return Err(Error::Strategy("label set is empty".into()));
    }
    let dim = dataset.obs_dim();
    let mut net = fresh_reward_net(dataset, spec)?;
    let mut opt = Adam::for_net(&net, spec.learning_rate);
    let mut rng = seed::rng(seed::derive_str(spec.seed, "reward-batches"));
    let k = per_group(spec, groups.len());
    let w = 1.0 / k as f64;
    for _ in 0..spec.steps {
        let mut x = Vec::with_capacity(k * groups.len() * dim);
        let mut y = Vec::with_capacity(k * groups.len());
        for g in &groups {
            for _ in 0..k {
                let i = rng.random_range(0..g.len());
                x.extend_from_slice(&g.x[i * dim..(i + 1) * dim]);
                y.push(g.targets[i]);
                if let Some(log) = log.as_deref_mut() {
                    log.ids.insert(g.owners[i]);
                }
            }
        }
        let x = Array2::from_shape_vec((y.len(), dim), x).expect("batch shape");
        let weights = vec![w; y.len()];
        let (_, grads) = weighted_bce_loss_and_grad(&net, x.view(), &y, &weights, spec.prob_clamp)?;
        opt.step(&mut net, &grads)?;
    }
    Ok(net)
}

/// Full-data value of the label objective for fixed parameters.
pub fn label_loss(net: &Mlp, dataset: &Dataset, labels: &SyntheticLabelSet, eps: f64) -> Result<f64> {
    let groups = collect_groups(dataset, labels)?;
    let dim = dataset.obs_dim();
    let mut total = 0.0;
    for g in &groups {
        let x = ndarray::ArrayView2::from_shape((g.len(), dim), &g.x).expect("group rows");
        let z: Vec<f64> = net.logits(x)?.iter().copied().collect();
        let t = bce_terms(&z, &g.targets, eps);
        total += t.loss.iter().sum::<f64>() / g.len() as f64;
    }
    Ok(total)
}

/// Value and logit-gradients of the flat objective on one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatObjective {
    pub loss: f64,
    /// Gradient w.r.t. each demonstration logit.
    pub d_demo: Vec<f64>,
    /// Gradient w.r.t. each unlabelled logit.
    pub d_unlabeled: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// The flat objective on demonstration logits `z_e` and unlabelled logits
/// `z_u`.
///
/// Without regularisation it is `E_e[-log p] + E_u[-log(1 - p)]`. With the PU
/// correction and prior `π` the unlabelled term is treated as a mixture:
/// `(1 + π)·E_e[-log p] + max(0, E_u[-log(1 - p)] - π·E_e[-log(1 - p)])`.
/// When the bracket is clamped at zero its gradient is zero.
pub fn flat_objective(z_e: &[f64], z_u: &[f64], reg: OrilReg, eps: f64) -> Result<FlatObjective> {
    if z_e.is_empty() || z_u.is_empty() {
        return Err(Error::Usage(
            "flat objective needs both demo and unlabelled samples".into(),
        ));
    }
    let (ne, nu) = (z_e.len() as f64, z_u.len() as f64);
    let pos_e = bce_terms(z_e, &vec![1.0; z_e.len()], eps);
    let neg_u = bce_terms(z_u, &vec![0.0; z_u.len()], eps);
    match reg {
        OrilReg::None => Ok(FlatObjective {
            loss: mean(&pos_e.loss) + mean(&neg_u.loss),
            d_demo: pos_e.dlogit.iter().map(|d| d / ne).collect(),
            d_unlabeled: neg_u.dlogit.iter().map(|d| d / nu).collect(),
        }),
        OrilReg::Pu { class_prior } => {
            let pi = class_prior.ok_or_else(|| Error::Config("PU correction needs a class prior".into()))?;
            let neg_e = bce_terms(z_e, &vec![0.0; z_e.len()], eps);
            let bracket = mean(&neg_u.loss) - pi * mean(&neg_e.loss);
            let active = bracket > 0.0;
            let loss = (1.0 + pi) * mean(&pos_e.loss) + bracket.max(0.0);
            let d_demo = pos_e
                .dlogit
                .iter()
                .zip(&neg_e.dlogit)
                .map(|(dp, dn)| {
                    let mut d = (1.0 + pi) * dp / ne;
                    if active {
                        d -= pi * dn / ne;
                    }
                    d
                })
                .collect();
            let d_unlabeled = neg_u.dlogit.iter().map(|d| if active { d / nu } else { 0.0 }).collect();
            Ok(FlatObjective {
                loss,
                d_demo,
                d_unlabeled,
            })
        }
    }
}

/// Minimise the flat objective with half of each batch drawn from the
/// demonstrations and half from the unlabelled episodes.
pub fn train_flat(
    dataset: &Dataset,
    demo_ids: &[u64],
    unlabeled_ids: &[u64],
    reg: OrilReg,
    spec: &TrainSpec,
    mut log: Option<&mut SampleLog>,
) -> Result<Mlp> {
    spec.validate()?;
    if demo_ids.is_empty() {
        return Err(Error::Strategy(
            "flat objective needs at least one demonstration".into(),
        ));
    }
    let demo = rows_of(dataset, demo_ids)?;
    let unl = rows_of(dataset, unlabeled_ids)?;
    if unl.len() == 0 {
        return Err(Error::Strategy("flat objective needs unlabelled episodes".into()));
    }
    let dim = dataset.obs_dim();
    let mut net = fresh_reward_net(dataset, spec)?;
    let mut opt = Adam::for_net(&net, spec.learning_rate);
    let mut rng = seed::rng(seed::derive_str(spec.seed, "reward-batches"));
    let k = per_group(spec, 2);
    for _ in 0..spec.steps {
        let mut idx_e = Vec::with_capacity(k);
        let mut idx_u = Vec::with_capacity(k);
        for _ in 0..k {
            idx_e.push(rng.random_range(0..demo.len()));
        }
        for _ in 0..k {
            idx_u.push(rng.random_range(0..unl.len()));
        }
        if let Some(log) = log.as_deref_mut() {
            log.ids.extend(idx_e.iter().map(|&i| demo.owners[i]));
            log.ids.extend(idx_u.iter().map(|&i| unl.owners[i]));
        }
        let mut x = gather_rows(&demo.x, dim, &idx_e);
        x.append(ndarray::Axis(0), gather_rows(&unl.x, dim, &idx_u).view())
            .expect("same width");
        let cache = net.forward_cached(x.view())?;
        let z: Vec<f64> = cache.logits.iter().copied().collect();
        let obj = flat_objective(&z[..k], &z[k..], reg, spec.prob_clamp)?;
        let d: Vec<f64> = obj.d_demo.into_iter().chain(obj.d_unlabeled).collect();
        let d = Array2::from_shape_vec((2 * k, 1), d).expect("column");
        let grads = net.backward(&cache, d.view());
        opt.step(&mut net, &grads)?;
    }
    Ok(net)
}

/// Full-data value of the flat objective for fixed parameters.
pub fn flat_loss(
    net: &Mlp,
    dataset: &Dataset,
    demo_ids: &[u64],
    unlabeled_ids: &[u64],
    reg: OrilReg,
    eps: f64,
) -> Result<f64> {
    let dim = dataset.obs_dim();
    let logits = |rows: &GroupRows| -> Result<Vec<f64>> {
        let x = ndarray::ArrayView2::from_shape((rows.len(), dim), &rows.x).expect("rows");
        Ok(net.logits(x)?.iter().copied().collect())
    };
    let ze = logits(&rows_of(dataset, demo_ids)?)?;
    let zu = logits(&rows_of(dataset, unlabeled_ids)?)?;
    Ok(flat_objective(&ze, &zu, reg, eps)?.loss)
}
