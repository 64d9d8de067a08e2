//! The three pipeline stages (reward learning, relabelling, policy learning)
//! as pure functions of a configuration and a run seed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{short_hash_of, AnnotationLevel, Condition, ExperimentConfig, T0Reference};
use crate::agents::{bc_train, crr_train, evaluate_policy, AgentConfig, Transitions};
use crate::data::{annotate_timesteps, generate_dataset, partition, Dataset, DatasetPartition, TimestepAnnotation};
use crate::error::{Error, Result};
use crate::metrics::{metrics_report, select_model, spread_statistics, MetricsReport, SelectionCriterion, Spread};
use crate::nn::Mlp;
use crate::seed;
use crate::strategies::{
    bootstrap, ground_truth_rewards, refine, relabel, train_strategy, validation_scores, RewardModel, RewardTable,
    StrategyConfig, StrategyInputs, StrategyKind,
};

/// Dataset, partition and annotations of one run seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedData {
    pub seed: u64,
    pub dataset: Dataset,
    pub partition: DatasetPartition,
    pub annotations: TimestepAnnotation,
}

pub fn dataset_seed(run_seed: u64) -> u64 {
    seed::derive_str(run_seed, "dataset")
}

/// Generate the dataset of a run seed. It depends only on the environment,
/// the data settings and the seed, so different studies share it.
pub fn generate(cfg: &ExperimentConfig, run_seed: u64) -> Result<Dataset> {
    Dataset::new(generate_dataset(
        &cfg.env,
        cfg.data.n_episodes,
        &cfg.data.policy_mix,
        dataset_seed(run_seed),
    )?)
}

/// Partition a dataset and simulate whatever annotation the study uses.
pub fn split(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    run_seed: u64,
) -> Result<(DatasetPartition, TimestepAnnotation)> {
    let mut params = cfg.partition.clone();
    params.seed = seed::derive(seed::derive_str(run_seed, "partition"), params.seed);
    let part = partition(dataset, &params)?;
    let annotations = match cfg.data.annotation {
        AnnotationLevel::Episode => TimestepAnnotation::new(),
        AnnotationLevel::Timestep => annotate_timesteps(dataset, &part.demo_ids)?,
    };
    Ok((part, annotations))
}

pub fn prepare(cfg: &ExperimentConfig, run_seed: u64) -> Result<SeedData> {
    let dataset = generate(cfg, run_seed)?;
    let (partition, annotations) = split(cfg, &dataset, run_seed)?;
    Ok(SeedData {
        seed: run_seed,
        dataset,
        partition,
        annotations,
    })
}

/// Length the time-threshold fractions refer to.
pub fn t0_reference_length(cfg: &ExperimentConfig, data: &SeedData) -> Result<usize> {
    let mut lengths = data
        .partition
        .demo_ids
        .iter()
        .map(|&id| Ok(data.dataset.get(id)?.len()))
        .collect::<Result<Vec<usize>>>()?;
    lengths.sort_unstable();
    Ok(match cfg.reward.t0_reference {
        T0Reference::MaxSteps => cfg.env.max_steps,
        T0Reference::MaxDemoLength => lengths.last().copied().unwrap_or(cfg.env.max_steps),
        T0Reference::MedianDemoLength => {
            if lengths.is_empty() {
                cfg.env.max_steps
            } else {
                lengths[(lengths.len() - 1) / 2]
            }
        }
    })
}

pub fn t0_candidates(cfg: &ExperimentConfig, data: &SeedData) -> Result<Vec<usize>> {
    let reference = t0_reference_length(cfg, data)? as f64;
    Ok(cfg
        .reward
        .t0_fractions
        .iter()
        .map(|f| (f * reference).round() as usize)
        .collect())
}

/// One evaluated reward-model candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub strategy: StrategyKind,
    pub config_hash: String,
    pub t0: usize,
    pub iter: usize,
    pub learning_rate: f64,
    pub metrics: MetricsReport,
}

/// All candidates of a strategy, the best index under each criterion, and
/// the deployed model (best under the configured criterion).
#[derive(Clone, Debug, PartialEq)]
pub struct RewardStage {
    pub strategy: StrategyKind,
    pub candidates: Vec<Candidate>,
    pub selected: BTreeMap<SelectionCriterion, usize>,
    pub model: RewardModel,
}

/// Serialisable summary of a reward stage (everything but the model).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardStageReport {
    pub strategy: StrategyKind,
    pub candidates: Vec<Candidate>,
    pub selected: BTreeMap<String, usize>,
}

impl RewardStage {
    pub fn report(&self) -> RewardStageReport {
        RewardStageReport {
            strategy: self.strategy,
            candidates: self.candidates.clone(),
            selected: self.selected.iter().map(|(c, &i)| (c.name().to_string(), i)).collect(),
        }
    }
}

fn reward_train_seed(cfg: &ExperimentConfig, run_seed: u64) -> u64 {
    seed::derive(seed::derive_str(run_seed, "reward"), cfg.reward.train.seed)
}

fn strategy_configs(cfg: &ExperimentConfig, data: &SeedData, kind: StrategyKind) -> Result<Vec<StrategyConfig>> {
    let mut base = StrategyConfig {
        kind,
        t0: 0,
        refinement_iters: cfg.reward.refinement_iters,
        oril_reg: crate::strategies::OrilReg::None,
        train: cfg.reward.train.clone(),
    };
    base.train.seed = reward_train_seed(cfg, data.seed);
    let lrs = cfg.reward.learning_rates();
    let with_lr = |c: &StrategyConfig, lr: f64| {
        let mut c = c.clone();
        c.train.learning_rate = lr;
        c
    };
    let mut out = Vec::new();
    match kind {
        StrategyKind::Sqil => out.push(base),
        StrategyKind::Oril => {
            for reg in &cfg.reward.oril_regs {
                for &lr in &lrs {
                    let mut c = with_lr(&base, lr);
                    c.oril_reg = *reg;
                    out.push(c);
                }
            }
        }
        StrategyKind::Tgr | StrategyKind::TgrI => {
            for t0 in t0_candidates(cfg, data)? {
                for &lr in &lrs {
                    let mut c = with_lr(&base, lr);
                    c.t0 = t0;
                    out.push(c);
                }
            }
        }
        StrategyKind::SupDemo | StrategyKind::SupAndFlat => {
            for &lr in &lrs {
                out.push(with_lr(&base, lr));
            }
        }
    }
    Ok(out)
}

fn inputs<'a>(cfg: &ExperimentConfig, data: &'a SeedData) -> StrategyInputs<'a> {
    StrategyInputs {
        dataset: &data.dataset,
        partition: &data.partition,
        annotations: &data.annotations,
        p_demo: cfg.partition.p_demo,
    }
}

pub fn validate_model(cfg: &ExperimentConfig, data: &SeedData, model: &RewardModel) -> Result<MetricsReport> {
    let scored = validation_scores(model, &data.dataset, &data.partition.validation_ids)?;
    metrics_report(&scored, cfg.reward.threshold)
}

fn selections(candidates: &[Candidate]) -> Result<BTreeMap<SelectionCriterion, usize>> {
    let reports: Vec<&MetricsReport> = candidates.iter().map(|c| &c.metrics).collect();
    SelectionCriterion::ALL
        .iter()
        .map(|&c| Ok((c, select_model(&reports, c)?)))
        .collect()
}

/// Per-iteration models of a refinement run, each scored on validation.
#[derive(Clone, Debug)]
pub struct RefinementTrace {
    pub config: StrategyConfig,
    pub models: Vec<RewardModel>,
    pub metrics: Vec<MetricsReport>,
}

/// Run refinement to `config.refinement_iters`, scoring the ensemble of every
/// iteration.
pub fn refinement_trace(cfg: &ExperimentConfig, data: &SeedData, config: &StrategyConfig) -> Result<RefinementTrace> {
    let spec = &config.train;
    let eps = spec.prob_clamp;
    let mut state = bootstrap(&data.dataset, &data.partition, config.t0, spec)?;
    let mut models = Vec::new();
    let mut metrics = Vec::new();
    loop {
        let mut m = RewardModel::ensemble(state.a.clone(), state.b.clone(), eps);
        m.provenance.insert("strategy".into(), StrategyKind::TgrI.name().into());
        m.provenance.insert("t0".into(), config.t0.to_string());
        m.provenance.insert("iteration".into(), state.iteration.to_string());
        m.provenance.insert("train_spec".into(), serde_json::to_string(spec)?);
        metrics.push(validate_model(cfg, data, &m)?);
        models.push(m);
        if state.iteration >= config.refinement_iters {
            break;
        }
        state = refine(&data.dataset, &data.partition, &state, spec, None, None)?;
    }
    Ok(RefinementTrace {
        config: config.clone(),
        models,
        metrics,
    })
}

/// Refinement runs for every time-guided configuration of the sweep grid
/// (thresholds × learning rates), each carried to `refinement_iters`.
pub fn refinement_study(cfg: &ExperimentConfig, data: &SeedData) -> Result<Vec<RefinementTrace>> {
    strategy_configs(cfg, data, StrategyKind::TgrI)?
        .iter()
        .map(|c| refinement_trace(cfg, data, c))
        .collect()
}

/// Cross-configuration spread of a per-iteration statistic.
pub fn spread_at(values_by_config: &[Vec<f64>], iteration: usize) -> Result<Spread> {
    let column = values_by_config
        .iter()
        .map(|v| {
            v.get(iteration)
                .copied()
                .ok_or_else(|| Error::Usage(format!("no value at iteration {iteration}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    spread_statistics(&column)
}

/// Train and score every candidate of `kind`; deploy the best one. The
/// refinement strategy refines the threshold and learning rate that the
/// plain time-guided sweep selects, reporting every iteration.
pub fn reward_stage(cfg: &ExperimentConfig, data: &SeedData, kind: StrategyKind) -> Result<RewardStage> {
    if kind == StrategyKind::TgrI {
        let tgr = reward_stage(cfg, data, StrategyKind::Tgr)?;
        return refinement_stage(cfg, data, &tgr);
    }
    let inputs = inputs(cfg, data);
    let mut candidates = Vec::new();
    let mut models = Vec::new();
    for config in strategy_configs(cfg, data, kind)? {
        let model = train_strategy(&inputs, &config)?;
        candidates.push(Candidate {
            strategy: kind,
            config_hash: short_hash_of(&config),
            t0: config.t0,
            iter: 0,
            learning_rate: config.train.learning_rate,
            metrics: validate_model(cfg, data, &model)?,
        });
        models.push(model);
    }
    let selected = selections(&candidates)?;
    let best = selected[&cfg.reward.selection];
    Ok(RewardStage {
        strategy: kind,
        candidates,
        selected,
        model: models.swap_remove(best),
    })
}

/// Refinement on top of a finished time-guided stage.
pub fn refinement_stage(cfg: &ExperimentConfig, data: &SeedData, tgr: &RewardStage) -> Result<RewardStage> {
    let chosen = &tgr.candidates[tgr.selected[&cfg.reward.selection]];
    let mut config = strategy_configs(cfg, data, StrategyKind::TgrI)?
        .into_iter()
        .find(|c| c.t0 == chosen.t0 && c.train.learning_rate == chosen.learning_rate)
        .ok_or_else(|| Error::Pipeline("selected time-guided candidate not found".into()))?;
    config.kind = StrategyKind::TgrI;
    let mut trace = refinement_trace(cfg, data, &config)?;
    let hash = short_hash_of(&config);
    let candidates: Vec<Candidate> = trace
        .metrics
        .iter()
        .enumerate()
        .map(|(i, m)| Candidate {
            strategy: StrategyKind::TgrI,
            config_hash: hash.clone(),
            t0: config.t0,
            iter: i,
            learning_rate: config.train.learning_rate,
            metrics: m.clone(),
        })
        .collect();
    let selected = selections(&candidates)?;
    // The deployed model is the final iteration, whatever its score.
    let model = trace.models.pop().expect("at least the bootstrap model");
    Ok(RewardStage {
        strategy: StrategyKind::TgrI,
        candidates,
        selected,
        model,
    })
}

/// Rewards for the policy pool under a condition.
pub fn condition_rewards(
    data: &SeedData,
    condition: Condition,
    model: Option<&RewardModel>,
) -> Result<Option<RewardTable>> {
    let ids = &data.partition.policy_pool_ids;
    match condition {
        Condition::Bc => Ok(None),
        Condition::Gt => Ok(Some(ground_truth_rewards(&data.dataset, ids)?)),
        _ => {
            let model = model.ok_or_else(|| {
                Error::Pipeline(format!("no reward model for `{condition}`: run the reward stage first"))
            })?;
            Ok(Some(relabel(model, &data.dataset, ids)?))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_return: f64,
    pub success_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentRun {
    pub condition: Condition,
    pub seed: u64,
    pub policy: Mlp,
    pub curve: Vec<CurvePoint>,
}

pub fn agent_config(cfg: &ExperimentConfig, run_seed: u64) -> AgentConfig {
    let mut a = cfg.agent.clone();
    a.seed = seed::derive(seed::derive_str(run_seed, "agent"), cfg.agent.seed);
    a
}

pub fn eval_seed(run_seed: u64) -> u64 {
    seed::derive_str(run_seed, "evaluation")
}

/// Train the agent of a condition, evaluating every `eval.every` steps.
pub fn agent_stage(
    cfg: &ExperimentConfig,
    data: &SeedData,
    condition: Condition,
    rewards: Option<&RewardTable>,
) -> Result<AgentRun> {
    let agent_cfg = agent_config(cfg, data.seed);
    let mut curve = Vec::new();
    let every = cfg.eval.every;
    let mut checkpoint = |step: usize, policy: &Mlp| -> Result<()> {
        if step.is_multiple_of(every) {
            let r = evaluate_policy(policy, &cfg.env, cfg.eval.episodes, eval_seed(data.seed), cfg.eval.mode)?;
            curve.push(CurvePoint {
                step,
                mean_return: r.mean_return,
                success_rate: r.success_rate,
            });
        }
        Ok(())
    };
    let policy = match condition {
        Condition::Bc => bc_train(&data.dataset, &data.partition.demo_ids, &agent_cfg, &mut checkpoint)?,
        _ => {
            let rewards = rewards.ok_or_else(|| {
                Error::Pipeline(format!("no relabelled rewards for `{condition}`: run relabel first"))
            })?;
            let transitions = Transitions::from_dataset(
                &data.dataset,
                &data.partition.policy_pool_ids,
                rewards,
                agent_cfg.episode_end,
            )?;
            crr_train(&transitions, &agent_cfg, &mut checkpoint)?.policy
        }
    };
    Ok(AgentRun {
        condition,
        seed: data.seed,
        policy,
        curve,
    })
}

/// Mean of the last `last` checkpoints: `(mean_return, success_rate)`.
pub fn summarize(curve: &[CurvePoint], last: usize) -> Result<(f64, f64)> {
    if curve.is_empty() {
        return Err(Error::Pipeline("no evaluation checkpoints were recorded".into()));
    }
    let tail = &curve[curve.len().saturating_sub(last)..];
    let n = tail.len() as f64;
    Ok((
        tail.iter().map(|p| p.mean_return).sum::<f64>() / n,
        tail.iter().map(|p| p.success_rate).sum::<f64>() / n,
    ))
}
