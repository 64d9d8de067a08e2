//! Reward-supervision strategies: synthetic label construction, the flat and
//! label-based classifier objectives, cross-split iterative refinement, and
//! relabelling of the policy pool with a trained reward model.

mod labels;
mod model;
mod refine;
mod relabel;
mod train;

pub use labels::{
    sqil_labels, sup_and_flat_labels, sup_demo_labels, tgr_labels, Hardness, LabelGroup, SyntheticLabelSet,
    TrajectoryLabels,
};
pub use model::{RewardFn, RewardModel, StateLookup};
pub use refine::{bootstrap, ensemble_predict, refine, refine_iterations, RefinementState};
pub use relabel::{
    ground_truth_rewards, load_rewards, parse_rewards, relabel, rewards_to_csv, save_rewards, validation_scores,
    RewardTable,
};
pub use train::{flat_loss, flat_objective, label_loss, train_flat, train_on_labels, FlatObjective, SampleLog};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetPartition, TimestepAnnotation};
use crate::error::{Error, Result};
use crate::nn::TrainSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Sqil,
    Oril,
    Tgr,
    TgrI,
    SupDemo,
    SupAndFlat,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Sqil,
        StrategyKind::Oril,
        StrategyKind::Tgr,
        StrategyKind::TgrI,
        StrategyKind::SupDemo,
        StrategyKind::SupAndFlat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Sqil => "sqil",
            StrategyKind::Oril => "oril",
            StrategyKind::Tgr => "tgr",
            StrategyKind::TgrI => "tgr_i",
            StrategyKind::SupDemo => "sup_demo",
            StrategyKind::SupAndFlat => "sup_and_flat",
        }
    }

    /// Whether the strategy consumes timestep annotations rather than
    /// episode-level success flags.
    pub fn needs_annotations(self) -> bool {
        matches!(self, StrategyKind::SupDemo | StrategyKind::SupAndFlat)
    }

    /// Whether the time threshold affects the strategy.
    pub fn uses_t0(self) -> bool {
        matches!(self, StrategyKind::Tgr | StrategyKind::TgrI)
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s || k.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Regulariser for the flat objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OrilReg {
    #[default]
    None,
    /// Non-negative positive-unlabelled risk correction. Without an explicit
    /// prior, one is estimated from the demonstration sampling rate.
    Pu { class_prior: Option<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    /// Time threshold in timesteps (1-based comparison `t <= t0`).
    pub t0: usize,
    pub refinement_iters: usize,
    pub oril_reg: OrilReg,
    pub train: TrainSpec,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            kind: StrategyKind::Tgr,
            t0: 0,
            refinement_iters: 3,
            oril_reg: OrilReg::None,
            train: TrainSpec::default(),
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let OrilReg::Pu { class_prior: Some(p) } = self.oril_reg {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Config(format!("class prior {p} not in (0, 1)")));
            }
        }
        Ok(())
    }
}

/// Class prior of the demonstration-vs-unlabelled mixture: the share of
/// positives in the reward pool when every success is counted, i.e.
/// demonstrations plus the successes left unlabelled by sampling at `p_demo`.
pub fn estimate_class_prior(n_demos: usize, n_pool: usize, p_demo: f64) -> Result<f64> {
    if n_pool == 0 || !(p_demo > 0.0 && p_demo <= 1.0) {
        return Err(Error::Config(
            "class prior needs a non-empty pool and p_demo in (0, 1]".into(),
        ));
    }
    let expected_positives = n_demos as f64 / p_demo;
    Ok((expected_positives / n_pool as f64).clamp(1e-3, 1.0 - 1e-3))
}

/// Everything a strategy may look at. Ground truth is not reachable from
/// here except through the annotation map, which was produced upstream.
pub struct StrategyInputs<'a> {
    pub dataset: &'a Dataset,
    pub partition: &'a DatasetPartition,
    pub annotations: &'a TimestepAnnotation,
    /// Demonstration sampling rate, used to estimate the PU class prior.
    pub p_demo: f64,
}

/// Train the reward model of a single strategy. For the refinement strategy
/// the returned model is the ensemble after `refinement_iters` iterations.
pub fn train_strategy(inputs: &StrategyInputs<'_>, config: &StrategyConfig) -> Result<RewardModel> {
    config.validate()?;
    let ds = inputs.dataset;
    let part = inputs.partition;
    let spec = &config.train;
    let mut model = match config.kind {
        StrategyKind::Sqil => {
            if part.demo_ids.is_empty() {
                return Err(Error::Strategy("SQIL needs at least one demonstration".into()));
            }
            let labels = sqil_labels(ds, &part.demo_ids, &part.unlabeled_ids)?;
            RewardModel::lookup(ds, &labels, spec.prob_clamp)?
        }
        StrategyKind::Oril => {
            let reg = match config.oril_reg {
                OrilReg::Pu { class_prior: None } => OrilReg::Pu {
                    class_prior: Some(estimate_class_prior(
                        part.demo_ids.len(),
                        part.reward_pool_ids.len(),
                        inputs.p_demo,
                    )?),
                },
                r => r,
            };
            let net = train_flat(ds, &part.demo_ids, &part.unlabeled_ids, reg, spec, None)?;
            let mut m = RewardModel::single(net, spec.prob_clamp);
            if let OrilReg::Pu { class_prior: Some(p) } = reg {
                m.provenance.insert("class_prior".into(), p.to_string());
            }
            m
        }
        StrategyKind::Tgr => {
            let labels = tgr_labels(ds, &part.demo_ids, &part.unlabeled_ids, config.t0)?;
            RewardModel::single(train_on_labels(ds, &labels, spec, None)?, spec.prob_clamp)
        }
        StrategyKind::TgrI => {
            let states = refine_iterations(ds, part, config.t0, config.refinement_iters, spec)?;
            let last = states.last().expect("bootstrap state");
            RewardModel::ensemble(last.a.clone(), last.b.clone(), spec.prob_clamp)
        }
        StrategyKind::SupDemo => {
            let labels = sup_demo_labels(ds, inputs.annotations)?;
            if labels.is_empty() {
                return Err(Error::Strategy("no timestep annotations".into()));
            }
            RewardModel::single(train_on_labels(ds, &labels, spec, None)?, spec.prob_clamp)
        }
        StrategyKind::SupAndFlat => {
            let annotated: Vec<u64> = inputs.annotations.keys().copied().collect();
            let unlabeled: Vec<u64> = part
                .reward_pool_ids
                .iter()
                .copied()
                .filter(|id| !inputs.annotations.contains_key(id))
                .collect();
            if annotated.is_empty() {
                return Err(Error::Strategy("no timestep annotations".into()));
            }
            let labels = sup_and_flat_labels(ds, inputs.annotations, &unlabeled)?;
            RewardModel::single(train_on_labels(ds, &labels, spec, None)?, spec.prob_clamp)
        }
    };
    model.provenance.insert("strategy".into(), config.kind.name().into());
    model.provenance.insert("t0".into(), config.t0.to_string());
    if config.kind == StrategyKind::TgrI {
        model
            .provenance
            .insert("iteration".into(), config.refinement_iters.to_string());
    }
    model
        .provenance
        .insert("train_spec".into(), serde_json::to_string(spec)?);
    Ok(model)
}
