//! Experiment configuration: a single TOML document. Every field has a
//! default, so a config file only lists what differs from the defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{AgentConfig, EpisodeEnd, EvalMode, WeightRule};
use crate::data::{default_policy_mix, PartitionParams, PolicyMixEntry};
use crate::env::{GoalPlacement, GridSpec};
use crate::error::{Error, Result};
use crate::metrics::SelectionCriterion;
use crate::nn::TrainSpec;
use crate::strategies::{OrilReg, StrategyKind};

/// One arm of a study: a reward source plus the agent trained on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Behavioural cloning on the demonstrations.
    Bc,
    /// CRR on the environment's own rewards.
    Gt,
    Sqil,
    Oril,
    Tgr,
    TgrI,
    SupDemo,
    SupAndFlat,
}

impl Condition {
    pub const ALL: [Condition; 8] = [
        Condition::Bc,
        Condition::Gt,
        Condition::Sqil,
        Condition::Oril,
        Condition::Tgr,
        Condition::TgrI,
        Condition::SupDemo,
        Condition::SupAndFlat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Bc => "bc",
            Condition::Gt => "gt",
            Condition::Sqil => "sqil",
            Condition::Oril => "oril",
            Condition::Tgr => "tgr",
            Condition::TgrI => "tgr_i",
            Condition::SupDemo => "sup_demo",
            Condition::SupAndFlat => "sup_and_flat",
        }
    }

    /// The learnt-reward strategy behind this condition, if any.
    pub fn strategy(self) -> Option<StrategyKind> {
        match self {
            Condition::Bc | Condition::Gt => None,
            Condition::Sqil => Some(StrategyKind::Sqil),
            Condition::Oril => Some(StrategyKind::Oril),
            Condition::Tgr => Some(StrategyKind::Tgr),
            Condition::TgrI => Some(StrategyKind::TgrI),
            Condition::SupDemo => Some(StrategyKind::SupDemo),
            Condition::SupAndFlat => Some(StrategyKind::SupAndFlat),
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s || c.name().replace('_', "-") == s)
            .ok_or_else(|| Error::Config(format!("unknown condition `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationLevel {
    /// Demonstrations are known only to be successful.
    Episode,
    /// Demonstrations carry per-timestep reward labels.
    Timestep,
}

/// What the time-threshold fractions are fractions of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum T0Reference {
    /// The environment's step cap.
    MaxSteps,
    /// The longest demonstration.
    MaxDemoLength,
    /// The median demonstration length.
    MedianDemoLength,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub n_episodes: usize,
    pub policy_mix: Vec<PolicyMixEntry>,
    pub annotation: AnnotationLevel,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            n_episodes: 2000,
            policy_mix: default_policy_mix(),
            annotation: AnnotationLevel::Episode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub train: TrainSpec,
    /// Candidate thresholds as fractions of `t0_reference`.
    pub t0_fractions: Vec<f64>,
    pub t0_reference: T0Reference,
    /// Candidate learning rates; empty means `train.learning_rate` only.
    pub learning_rates: Vec<f64>,
    /// Candidate regularisers for the flat objective.
    pub oril_regs: Vec<OrilReg>,
    pub refinement_iters: usize,
    /// Metric used to pick the deployed candidate.
    pub selection: SelectionCriterion,
    /// Decision threshold for precision, recall and f-score.
    pub threshold: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            train: TrainSpec::default(),
            t0_fractions: vec![0.25, 0.4, 0.5, 0.6],
            t0_reference: T0Reference::MedianDemoLength,
            learning_rates: Vec::new(),
            oril_regs: vec![OrilReg::None, OrilReg::Pu { class_prior: None }],
            refinement_iters: 3,
            selection: SelectionCriterion::AucPr,
            threshold: 0.5,
        }
    }
}

impl RewardConfig {
    pub fn learning_rates(&self) -> Vec<f64> {
        if self.learning_rates.is_empty() {
            vec![self.train.learning_rate]
        } else {
            self.learning_rates.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: usize,
    /// Training steps between evaluation checkpoints.
    pub every: usize,
    pub mode: EvalMode,
    /// Number of final checkpoints averaged into the summary.
    pub summary_last: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            episodes: 100,
            every: 500,
            mode: EvalMode::Sampled,
            summary_last: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: String,
    pub env: GridSpec,
    pub data: DataConfig,
    pub partition: PartitionParams,
    pub reward: RewardConfig,
    pub agent: AgentConfig,
    pub eval: EvalConfig,
    pub conditions: Vec<Condition>,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            preset: "custom".into(),
            env: GridSpec::default(),
            data: DataConfig::default(),
            partition: PartitionParams::default(),
            reward: RewardConfig::default(),
            agent: AgentConfig::default(),
            eval: EvalConfig::default(),
            conditions: vec![Condition::Bc, Condition::Gt],
            seeds: vec![0, 1, 2],
        }
    }
}

fn field_err(path: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {msg}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Check every field, naming the offending one on failure.
    pub fn validate(&self) -> Result<()> {
        self.env.validate().map_err(|e| field_err("env", e))?;
        if self.data.n_episodes == 0 {
            return Err(field_err("data.n_episodes", "must be >= 1"));
        }
        if self.data.policy_mix.is_empty() {
            return Err(field_err("data.policy_mix", "must not be empty"));
        }
        for (i, e) in self.data.policy_mix.iter().enumerate() {
            e.policy
                .validate()
                .map_err(|err| field_err(&format!("data.policy_mix[{i}].policy"), err))?;
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(field_err(&format!("data.policy_mix[{i}].weight"), "must be positive"));
            }
        }
        let p = &self.partition;
        if !(p.p_demo > 0.0 && p.p_demo <= 1.0) {
            return Err(field_err("partition.p_demo", "must lie in (0, 1]"));
        }
        if !(p.reward_pool_fraction > 0.0 && p.reward_pool_fraction <= 1.0) {
            return Err(field_err("partition.reward_pool_fraction", "must lie in (0, 1]"));
        }
        self.reward.train.validate().map_err(|e| field_err("reward.train", e))?;
        if self.reward.t0_fractions.is_empty() {
            return Err(field_err("reward.t0_fractions", "must not be empty"));
        }
        if self.reward.t0_fractions.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(field_err("reward.t0_fractions", "must be non-negative"));
        }
        if self.reward.learning_rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(field_err("reward.learning_rates", "must be positive"));
        }
        if self.reward.oril_regs.is_empty() {
            return Err(field_err("reward.oril_regs", "must not be empty"));
        }
        for (i, r) in self.reward.oril_regs.iter().enumerate() {
            if let OrilReg::Pu { class_prior: Some(pi) } = r {
                if !(*pi > 0.0 && *pi < 1.0) {
                    return Err(field_err(
                        &format!("reward.oril_regs[{i}].class_prior"),
                        "must lie in (0, 1)",
                    ));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.reward.threshold) {
            return Err(field_err("reward.threshold", "must lie in [0, 1]"));
        }
        self.agent.validate().map_err(|e| field_err("agent", e))?;
        if self.eval.episodes == 0 {
            return Err(field_err("eval.episodes", "must be >= 1"));
        }
        if self.eval.every == 0 {
            return Err(field_err("eval.every", "must be >= 1"));
        }
        if self.eval.summary_last == 0 {
            return Err(field_err("eval.summary_last", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(field_err("seeds", "must not be empty"));
        }
        if self.conditions.is_empty() {
            return Err(field_err("conditions", "must not be empty"));
        }
        if self.data.annotation == AnnotationLevel::Episode
            && self
                .conditions
                .iter()
                .any(|c| c.strategy().is_some_and(|s| s.needs_annotations()))
        {
            return Err(field_err(
                "conditions",
                "timestep-supervised strategies need data.annotation = \"timestep\"",
            ));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form of the whole configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// First 12 hex digits of [`hash`](Self::hash).
    pub fn short_hash(&self) -> String {
        self.hash()[..12].to_string()
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Short hash of any serialisable value.
pub fn short_hash_of<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_string(value).expect("value serialises");
    hex(&Sha256::digest(json.as_bytes()))[..12].to_string()
}

/// Named configurations.
/// Settings shared by the two studies: longer reward and agent training
/// than the library defaults, exponential advantage weights and episode
/// ends treated as time-limit truncation.
fn trend_base(name: &str) -> ExperimentConfig {
    ExperimentConfig {
        preset: name.into(),
        reward: RewardConfig {
            train: TrainSpec {
                steps: 3000,
                learning_rate: 3e-4,
                ..TrainSpec::default()
            },
            learning_rates: vec![3e-4, 1e-3],
            ..RewardConfig::default()
        },
        agent: AgentConfig {
            steps: 10_000,
            weight_rule: WeightRule::Exponential { beta: 0.3 },
            episode_end: EpisodeEnd::Truncated,
            ..AgentConfig::default()
        },
        ..ExperimentConfig::default()
    }
}

pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        // Goals move every episode, so a handful of demonstrations covers
        // little of the goal-conditioned state space.
        "episode-level-study" => Ok(ExperimentConfig {
            env: GridSpec {
                goal: GoalPlacement::Random,
                ..GridSpec::default()
            },
            conditions: vec![
                Condition::Bc,
                Condition::Gt,
                Condition::Sqil,
                Condition::Oril,
                Condition::Tgr,
                Condition::TgrI,
            ],
            ..trend_base(name)
        }),
        // Eight or so annotated episodes: the goal stays put.
        "timestep-level-study" => Ok(ExperimentConfig {
            data: DataConfig {
                annotation: AnnotationLevel::Timestep,
                ..DataConfig::default()
            },
            partition: PartitionParams {
                p_demo: 1.0 / 128.0,
                min_demos: 8,
                ..PartitionParams::default()
            },
            conditions: vec![Condition::Gt, Condition::SupDemo, Condition::SupAndFlat],
            ..trend_base(name)
        }),
        "smoke" => Ok(ExperimentConfig {
            preset: name.into(),
            env: GridSpec {
                width: 4,
                height: 4,
                noise_dims: 2,
                max_steps: 20,
                success_grace: 2,
                goal: GoalPlacement::Fixed { x: 3, y: 3 },
            },
            data: DataConfig {
                n_episodes: 120,
                ..DataConfig::default()
            },
            partition: PartitionParams {
                p_demo: 0.25,
                validation_count: 30,
                ..PartitionParams::default()
            },
            reward: RewardConfig {
                train: TrainSpec {
                    batch_size: 32,
                    steps: 40,
                    hidden: vec![16],
                    ..TrainSpec::default()
                },
                t0_fractions: vec![0.25, 0.5],
                refinement_iters: 1,
                ..RewardConfig::default()
            },
            agent: AgentConfig {
                steps: 60,
                batch_size: 32,
                hidden: vec![16],
                target_sync: 20,
                episode_end: EpisodeEnd::Truncated,
                ..AgentConfig::default()
            },
            eval: EvalConfig {
                episodes: 10,
                every: 20,
                ..EvalConfig::default()
            },
            conditions: vec![
                Condition::Bc,
                Condition::Gt,
                Condition::Sqil,
                Condition::Tgr,
                Condition::TgrI,
            ],
            seeds: vec![0],
        }),
        other => Err(Error::Config(format!(
            "unknown preset `{other}` (known: {})",
            PRESETS.join(", ")
        ))),
    }
}

pub const PRESETS: [&str; 3] = ["episode-level-study", "timestep-level-study", "smoke"];
