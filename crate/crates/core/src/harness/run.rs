//! On-disk orchestration: every stage writes its artifacts atomically under
//! the output directory and, with `resume`, reuses artifacts that already
//! exist instead of recomputing them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Condition, ExperimentConfig};
use super::pipeline::{
    agent_stage, condition_rewards, eval_seed, prepare, refinement_stage, reward_stage, summarize, validate_model,
    AgentRun, Candidate, CurvePoint, RewardStage, RewardStageReport, SeedData,
};
use super::report::{self, CurveRow, SummaryRow};
use crate::agents::evaluate_policy;
use crate::data::io::{load_dataset, load_partition, save_dataset, save_partition};
use crate::error::{Error, Result};
use crate::metrics::SelectionCriterion;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::Mlp;
use crate::strategies::{load_rewards, save_rewards, RewardModel, RewardTable, StrategyKind};

#[derive(Clone, Debug)]
pub struct Workspace {
    pub root: PathBuf,
    pub resume: bool,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>, resume: bool) -> Self {
        Workspace {
            root: root.into(),
            resume,
        }
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed-{seed}"))
    }

    pub fn dataset_path(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("dataset.jsonl")
    }

    pub fn partition_path(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("partition.json")
    }

    pub fn reward_model_path(&self, seed: u64, kind: StrategyKind) -> PathBuf {
        self.seed_dir(seed).join("reward").join(format!("{kind}.json"))
    }

    pub fn reward_report_path(&self, seed: u64, kind: StrategyKind) -> PathBuf {
        self.seed_dir(seed)
            .join("reward")
            .join(format!("{kind}.candidates.json"))
    }

    pub fn reward_metrics_path(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("reward_metrics.csv")
    }

    pub fn selections_path(&self, seed: u64) -> PathBuf {
        self.seed_dir(seed).join("selections.csv")
    }

    pub fn rewards_path(&self, seed: u64, condition: Condition) -> PathBuf {
        self.seed_dir(seed).join("rewards").join(format!("{condition}.csv"))
    }

    pub fn agent_path(&self, seed: u64, condition: Condition) -> PathBuf {
        self.seed_dir(seed).join("agents").join(format!("{condition}.json"))
    }

    pub fn curve_path(&self, seed: u64, condition: Condition) -> PathBuf {
        self.seed_dir(seed).join("curves").join(format!("{condition}.csv"))
    }

    pub fn curves_path(&self) -> PathBuf {
        self.root.join("curves.csv")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.root.join("summary.csv")
    }

    pub fn record_path(&self) -> PathBuf {
        self.root.join("run_record.json")
    }

    fn reuse(&self, paths: &[&Path]) -> bool {
        self.resume && paths.iter().all(|p| p.exists())
    }
}

fn missing(stage: &str, path: &Path) -> Error {
    Error::Pipeline(format!(
        "missing {} from the `{stage}` stage; run `{stage}` first",
        path.display()
    ))
}

/// Per-stage wall-clock time and the artifacts a run touched.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub preset: String,
    pub config_hash: String,
    pub stage_seconds: BTreeMap<String, f64>,
    pub artifacts: Vec<PathBuf>,
    pub curves: Vec<CurveRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub strategy: String,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl RunRecord {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f(self)?;
        *self.stage_seconds.entry(stage.to_string()).or_default() += start.elapsed().as_secs_f64();
        Ok(out)
    }

    fn touch(&mut self, path: PathBuf) {
        if !self.artifacts.contains(&path) {
            self.artifacts.push(path);
        }
    }

    /// Every referenced artifact must exist.
    pub fn check_artifacts(&self) -> Result<()> {
        match self.artifacts.iter().find(|p| !p.exists()) {
            Some(p) => Err(Error::Pipeline(format!("artifact {} is missing", p.display()))),
            None => Ok(()),
        }
    }
}

/// Stage 0: dataset and partition.
pub fn gen_data(ws: &Workspace, cfg: &ExperimentConfig, seed: u64, rec: &mut RunRecord) -> Result<SeedData> {
    let (dp, pp) = (ws.dataset_path(seed), ws.partition_path(seed));
    let data = if ws.reuse(&[&dp, &pp]) {
        load_data(ws, seed)?
    } else {
        rec.time("gen-data", |_| {
            let data = prepare(cfg, seed)?;
            std::fs::create_dir_all(ws.seed_dir(seed))?;
            save_dataset(&data.dataset, &dp)?;
            save_partition(&data.partition, &data.annotations, &pp)?;
            Ok(data)
        })?
    };
    rec.touch(dp);
    rec.touch(pp);
    Ok(data)
}

/// Load the artifacts of [`gen_data`], failing if they are absent.
pub fn load_data(ws: &Workspace, seed: u64) -> Result<SeedData> {
    let (dp, pp) = (ws.dataset_path(seed), ws.partition_path(seed));
    for p in [&dp, &pp] {
        if !p.exists() {
            return Err(missing("gen-data", p));
        }
    }
    let dataset = load_dataset(&dp)?;
    let (partition, annotations) = load_partition(&pp)?;
    partition.validate(&dataset)?;
    Ok(SeedData {
        seed,
        dataset,
        partition,
        annotations,
    })
}

pub fn load_reward_stage(ws: &Workspace, seed: u64, kind: StrategyKind) -> Result<RewardStage> {
    let mp = ws.reward_model_path(seed, kind);
    let rp = ws.reward_report_path(seed, kind);
    for p in [&mp, &rp] {
        if !p.exists() {
            return Err(missing("train-reward", p));
        }
    }
    let model = RewardModel::from_checkpoint(Checkpoint::load(&mp)?)?;
    let report: RewardStageReport = serde_json::from_str(&std::fs::read_to_string(&rp)?)?;
    let selected = report
        .selected
        .iter()
        .map(|(name, &i)| {
            let c = SelectionCriterion::ALL
                .into_iter()
                .find(|c| c.name() == name)
                .ok_or_else(|| Error::Data(format!("unknown criterion `{name}`")))?;
            Ok((c, i))
        })
        .collect::<Result<_>>()?;
    Ok(RewardStage {
        strategy: report.strategy,
        candidates: report.candidates,
        selected,
        model,
    })
}

fn save_reward_stage(ws: &Workspace, seed: u64, stage: &RewardStage) -> Result<()> {
    let mp = ws.reward_model_path(seed, stage.strategy);
    if let Some(dir) = mp.parent() {
        std::fs::create_dir_all(dir)?;
    }
    stage.model.to_checkpoint().save(&mp)?;
    let json = serde_json::to_string_pretty(&stage.report())? + "\n";
    report::write(&ws.reward_report_path(seed, stage.strategy), &json)
}

/// Stage 1: reward learning for one strategy (with its hyperparameter sweep).
pub fn train_reward(
    ws: &Workspace,
    cfg: &ExperimentConfig,
    data: &SeedData,
    kind: StrategyKind,
    rec: &mut RunRecord,
) -> Result<RewardStage> {
    let (mp, rp) = (
        ws.reward_model_path(data.seed, kind),
        ws.reward_report_path(data.seed, kind),
    );
    let stage = if ws.reuse(&[&mp, &rp]) {
        load_reward_stage(ws, data.seed, kind)?
    } else {
        let stage = if kind == StrategyKind::TgrI {
            let tgr = train_reward(ws, cfg, data, StrategyKind::Tgr, rec)?;
            rec.time("train-reward", |_| refinement_stage(cfg, data, &tgr))?
        } else {
            rec.time("train-reward", |_| reward_stage(cfg, data, kind))?
        };
        save_reward_stage(ws, data.seed, &stage)?;
        stage
    };
    rec.touch(mp);
    rec.touch(rp);
    Ok(stage)
}

/// Write the candidate metrics and best-of selections of finished stages.
pub fn write_reward_reports(ws: &Workspace, seed: u64, stages: &[&RewardStage], rec: &mut RunRecord) -> Result<()> {
    let candidates: Vec<Candidate> = stages.iter().flat_map(|s| s.candidates.clone()).collect();
    let mut selections = Vec::new();
    for s in stages {
        for (crit, &i) in &s.selected {
            selections.push((s.candidates[i].clone(), *crit));
        }
    }
    let (mp, sp) = (ws.reward_metrics_path(seed), ws.selections_path(seed));
    report::write(&mp, &report::reward_metrics_csv(&candidates)?)?;
    report::write(&sp, &report::selections_csv(&selections)?)?;
    rec.touch(mp);
    rec.touch(sp);
    Ok(())
}

/// Stage 2: relabel the policy pool with a reward model (or ground truth).
pub fn relabel_stage(
    ws: &Workspace,
    data: &SeedData,
    condition: Condition,
    model: Option<&RewardModel>,
    rec: &mut RunRecord,
) -> Result<Option<RewardTable>> {
    if condition == Condition::Gt || condition == Condition::Bc {
        return condition_rewards(data, condition, None);
    }
    let path = ws.rewards_path(data.seed, condition);
    let table = if ws.reuse(&[&path]) {
        load_rewards(&path)?
    } else {
        let table = rec
            .time("relabel", |_| condition_rewards(data, condition, model))?
            .expect("learnt-reward conditions produce rewards");
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        save_rewards(&table, &path)?;
        table
    };
    rec.touch(path);
    Ok(Some(table))
}

/// Load relabelled rewards written by [`relabel_stage`].
pub fn load_condition_rewards(ws: &Workspace, data: &SeedData, condition: Condition) -> Result<Option<RewardTable>> {
    match condition {
        Condition::Gt | Condition::Bc => condition_rewards(data, condition, None),
        _ => {
            let path = ws.rewards_path(data.seed, condition);
            if !path.exists() {
                return Err(missing("relabel", &path));
            }
            Ok(Some(load_rewards(&path)?))
        }
    }
}

fn policy_checkpoint(run: &AgentRun, cfg: &ExperimentConfig) -> Checkpoint {
    let mut provenance = BTreeMap::new();
    provenance.insert("condition".into(), run.condition.name().into());
    provenance.insert("seed".into(), run.seed.to_string());
    provenance.insert("config_hash".into(), cfg.hash());
    Checkpoint {
        kind: "policy".into(),
        networks: vec![run.policy.clone()],
        provenance,
    }
}

fn curve_rows(cfg: &ExperimentConfig, run: &AgentRun) -> Vec<CurveRow> {
    run.curve
        .iter()
        .map(|&point| CurveRow {
            preset: cfg.preset.clone(),
            condition: run.condition,
            seed: run.seed,
            point,
        })
        .collect()
}

/// Stage 3: train and evaluate the agent of a condition.
pub fn train_agent(
    ws: &Workspace,
    cfg: &ExperimentConfig,
    data: &SeedData,
    condition: Condition,
    rewards: Option<&RewardTable>,
    rec: &mut RunRecord,
) -> Result<AgentRun> {
    let (ap, cp) = (ws.agent_path(data.seed, condition), ws.curve_path(data.seed, condition));
    let run = if ws.reuse(&[&ap, &cp]) {
        load_agent(ws, data.seed, condition)?
    } else {
        let run = rec.time("train-agent", |_| agent_stage(cfg, data, condition, rewards))?;
        if let Some(dir) = ap.parent() {
            std::fs::create_dir_all(dir)?;
        }
        policy_checkpoint(&run, cfg).save(&ap)?;
        report::write(&cp, &report::curves_csv(&curve_rows(cfg, &run))?)?;
        run
    };
    rec.touch(ap);
    rec.touch(cp);
    Ok(run)
}

pub fn load_agent(ws: &Workspace, seed: u64, condition: Condition) -> Result<AgentRun> {
    let (ap, cp) = (ws.agent_path(seed, condition), ws.curve_path(seed, condition));
    for p in [&ap, &cp] {
        if !p.exists() {
            return Err(missing("train-agent", p));
        }
    }
    let ck = Checkpoint::load(&ap)?;
    let policy: Mlp = ck
        .networks
        .into_iter()
        .next()
        .ok_or_else(|| Error::Data("policy checkpoint holds no network".into()))?;
    let curve = report::parse_curve_csv(&std::fs::read_to_string(&cp)?)?
        .into_iter()
        .map(|r| r.point)
        .collect();
    Ok(AgentRun {
        condition,
        seed,
        policy,
        curve,
    })
}

/// Re-evaluate the saved agents of the configured conditions (those that
/// have been trained) with the configured evaluation settings.
pub fn eval_agents(ws: &Workspace, cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let trained: Vec<Condition> = cfg
        .conditions
        .iter()
        .copied()
        .filter(|&c| ws.agent_path(seed, c).exists())
        .collect();
    let Some(&first) = cfg.conditions.first() else {
        return Err(Error::Config("no conditions configured".into()));
    };
    if trained.is_empty() {
        return Err(missing("train-agent", &ws.agent_path(seed, first)));
    }
    let mut rows = Vec::new();
    for c in trained {
        let run = load_agent(ws, seed, c)?;
        let r = evaluate_policy(&run.policy, &cfg.env, cfg.eval.episodes, eval_seed(seed), cfg.eval.mode)?;
        rows.push((cfg.preset.clone(), c, seed, r));
    }
    report::eval_csv(&rows)
}

/// Outcome of a full end-to-end run.
#[derive(Clone, Debug, PartialEq)]
pub struct StudyOutput {
    pub curves: Vec<CurveRow>,
    pub summary: Vec<SummaryRow>,
    /// Reward stages by seed and strategy.
    pub reward_stages: BTreeMap<(u64, StrategyKind), RewardStage>,
    pub record: RunRecord,
}

impl StudyOutput {
    pub fn summary_of(&self, condition: Condition, seed: u64) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.condition == condition && r.seed == seed)
    }
}

/// Reward learning and its reports for every learnt-reward condition of a seed.
pub fn run_reward_stages(
    ws: &Workspace,
    cfg: &ExperimentConfig,
    data: &SeedData,
    rec: &mut RunRecord,
) -> Result<BTreeMap<StrategyKind, RewardStage>> {
    let mut stages = BTreeMap::new();
    for kind in cfg.conditions.iter().filter_map(|c| c.strategy()) {
        stages.insert(kind, train_reward(ws, cfg, data, kind, rec)?);
    }
    let refs: Vec<&RewardStage> = stages.values().collect();
    if !refs.is_empty() {
        write_reward_reports(ws, data.seed, &refs, rec)?;
    }
    Ok(stages)
}

/// Every stage for every seed and condition, then the aggregate CSVs.
pub fn run_study(ws: &Workspace, cfg: &ExperimentConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&ws.root)?;
    let mut rec = RunRecord {
        preset: cfg.preset.clone(),
        config_hash: cfg.hash(),
        ..RunRecord::default()
    };
    let config_path = ws.root.join("config.toml");
    report::write(&config_path, &cfg.to_toml()?)?;
    rec.touch(config_path);
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    let mut reward_stages = BTreeMap::new();
    for &seed in &cfg.seeds {
        let data = gen_data(ws, cfg, seed, &mut rec)?;
        let stages = run_reward_stages(ws, cfg, &data, &mut rec)?;
        for &condition in &cfg.conditions {
            let model = condition.strategy().map(|k| &stages[&k].model);
            let rewards = relabel_stage(ws, &data, condition, model, &mut rec)?;
            let run = train_agent(ws, cfg, &data, condition, rewards.as_ref(), &mut rec)?;
            let (mean_return, success_rate) = summarize(&run.curve, cfg.eval.summary_last)?;
            summary.push(SummaryRow {
                preset: cfg.preset.clone(),
                condition,
                seed,
                mean_return,
                success_rate,
            });
            rec.curves.push(CurveRecord {
                strategy: condition.name().into(),
                seed,
                points: run.curve.clone(),
            });
            curves.extend(curve_rows(cfg, &run));
        }
        for (kind, stage) in stages {
            reward_stages.insert((seed, kind), stage);
        }
    }
    report::write(&ws.curves_path(), &report::curves_csv(&curves)?)?;
    report::write(&ws.summary_path(), &report::summary_csv(&summary)?)?;
    rec.touch(ws.curves_path());
    rec.touch(ws.summary_path());
    rec.check_artifacts()?;
    report::write(&ws.record_path(), &(serde_json::to_string_pretty(&rec)? + "\n"))?;
    Ok(StudyOutput {
        curves,
        summary,
        reward_stages,
        record: rec,
    })
}

/// Re-score the deployed reward model of every learnt-reward condition on
/// the validation episodes.
pub fn eval_reward_models(ws: &Workspace, cfg: &ExperimentConfig, seed: u64) -> Result<String> {
    let data = load_data(ws, seed)?;
    let mut rows = Vec::new();
    for kind in cfg.conditions.iter().filter_map(|c| c.strategy()) {
        let stage = load_reward_stage(ws, seed, kind)?;
        // Refinement deploys its final iteration regardless of the selections.
        let deployed = match kind {
            StrategyKind::TgrI => stage.candidates.len() - 1,
            _ => stage.selected[&cfg.reward.selection],
        };
        let mut chosen = stage.candidates[deployed].clone();
        chosen.metrics = validate_model(cfg, &data, &stage.model)?;
        rows.push(chosen);
    }
    report::reward_metrics_csv(&rows)
}
