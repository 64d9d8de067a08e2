//! Command-line front end. Every subcommand reads an experiment config
//! (a TOML file or a named preset), optionally narrowed to one seed, and
//! reads/writes artifacts under `--out`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use rewardlearn::error::Error;
use rewardlearn::harness::{self, run, Condition, ExperimentConfig, Workspace};
use rewardlearn::nn::checkpoint::Checkpoint;
use rewardlearn::strategies::{load_rewards, RewardModel};

#[derive(Parser)]
#[command(
    name = "rewardlearn",
    version,
    about = "Reward learning from limited supervision for offline RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML). Defaults to the named preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no --config is given.
    #[arg(long, default_value = "episode-level-study")]
    preset: String,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Reuse artifacts that already exist instead of recomputing them.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the dataset and its partition.
    GenData(Common),
    /// Train (and sweep) the reward model of one strategy.
    TrainReward {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Condition,
    },
    /// Relabel the policy pool with a trained reward model.
    Relabel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        strategy: Condition,
        /// Reward checkpoint to use instead of the one under --out.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train the agent of one condition (gt, bc or a learnt reward).
    TrainAgent {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        condition: Condition,
        /// Rewards CSV to use instead of the one under --out.
        #[arg(long)]
        rewards: Option<PathBuf>,
    },
    /// Re-evaluate trained agents or reward models.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Score reward models on validation instead of rolling out agents.
        #[arg(long)]
        rewards: bool,
    },
    /// Reward-model hyperparameter sweep for every learnt-reward condition.
    Sweep(Common),
    /// Run a preset end to end.
    Repro {
        #[command(flatten)]
        common: Common,
        /// Preset name; overrides --preset.
        name: Option<String>,
    },
}

fn load_config(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => harness::preset(&common.preset)?,
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn workspace(common: &Common) -> Workspace {
    Workspace::new(&common.out, common.resume)
}

fn finish(ws: &Workspace, cfg: &ExperimentConfig, mut rec: run::RunRecord) -> anyhow::Result<()> {
    rec.check_artifacts()?;
    rec.preset = cfg.preset.clone();
    rec.config_hash = cfg.hash();
    let path = ws.record_path();
    harness::report::write(&path, &(serde_json::to_string_pretty(&rec)? + "\n"))?;
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::GenData(common) => {
            let (cfg, ws) = (load_config(&common)?, workspace(&common));
            let mut rec = run::RunRecord::default();
            for &seed in &cfg.seeds {
                let data = run::gen_data(&ws, &cfg, seed, &mut rec)?;
                println!(
                    "seed {seed}: {} episodes, {} demos, {} pool, {} validation",
                    data.dataset.len(),
                    data.partition.demo_ids.len(),
                    data.partition.reward_pool_ids.len(),
                    data.partition.validation_ids.len()
                );
            }
            finish(&ws, &cfg, rec)
        }
        Command::TrainReward { common, strategy } => {
            let (cfg, ws) = (load_config(&common)?, workspace(&common));
            let kind = strategy
                .strategy()
                .ok_or_else(|| Error::Usage(format!("`{strategy}` has no reward model")))?;
            let mut rec = run::RunRecord::default();
            for &seed in &cfg.seeds {
                let data = run::load_data(&ws, seed)?;
                let stage = run::train_reward(&ws, &cfg, &data, kind, &mut rec)?;
                run::write_reward_reports(&ws, seed, &[&stage], &mut rec)?;
                println!("seed {seed}: {} candidates for {kind}", stage.candidates.len());
            }
            finish(&ws, &cfg, rec)
        }
        Command::Relabel {
            common,
            strategy,
            model,
        } => {
            let (cfg, ws) = (load_config(&common)?, workspace(&common));
            let mut rec = run::RunRecord::default();
            for &seed in &cfg.seeds {
                let data = run::load_data(&ws, seed)?;
                let model = match (&model, strategy.strategy()) {
                    (Some(path), _) => Some(RewardModel::from_checkpoint(Checkpoint::load(path)?)?),
                    (None, Some(kind)) => Some(run::load_reward_stage(&ws, seed, kind)?.model),
                    (None, None) => None,
                };
                run::relabel_stage(&ws, &data, strategy, model.as_ref(), &mut rec)?;
            }
            finish(&ws, &cfg, rec)
        }
        Command::TrainAgent {
            common,
            condition,
            rewards,
        } => {
            let (cfg, ws) = (load_config(&common)?, workspace(&common));
            let mut rec = run::RunRecord::default();
            for &seed in &cfg.seeds {
                let data = run::load_data(&ws, seed)?;
                let table = match &rewards {
                    Some(path) => Some(load_rewards(path)?),
                    None => run::load_condition_rewards(&ws, &data, condition)?,
                };
                let out = run::train_agent(&ws, &cfg, &data, condition, table.as_ref(), &mut rec)?;
                let (ret, success) = harness::pipeline::summarize(&out.curve, cfg.eval.summary_last)?;
                println!("seed {seed}: {condition} mean_return {ret:.3} success_rate {success:.3}");
            }
            finish(&ws, &cfg, rec)
        }
        Command::Eval { common, rewards } => {
            let (cfg, ws) = (load_config(&common)?, workspace(&common));
            for &seed in &cfg.seeds {
                let (text, name) = if rewards {
                    (run::eval_reward_models(&ws, &cfg, seed)?, "reward_eval.csv")
                } else {
                    (run::eval_agents(&ws, &cfg, seed)?, "agent_eval.csv")
                };
                let path = ws.seed_dir(seed).join(name);
                harness::report::write(&path, &text)?;
                print!("{text}");
            }
            Ok(())
        }
        Command::Sweep(common) => {
            let (cfg, ws) = (load_config(&common)?, workspace(&common));
            let mut rec = run::RunRecord::default();
            for &seed in &cfg.seeds {
                let data = run::gen_data(&ws, &cfg, seed, &mut rec)?;
                let stages = run::run_reward_stages(&ws, &cfg, &data, &mut rec)?;
                for stage in stages.values() {
                    println!(
                        "seed {seed}: {} — {} candidates, {} selections",
                        stage.strategy,
                        stage.candidates.len(),
                        stage.selected.len()
                    );
                }
            }
            finish(&ws, &cfg, rec)
        }
        Command::Repro { mut common, name } => {
            if let Some(name) = name {
                common.preset = name;
            }
            let (cfg, ws) = (load_config(&common)?, workspace(&common));
            let out = run::run_study(&ws, &cfg)?;
            print!("{}", harness::report::summary_csv(&out.summary)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e
                .chain()
                .any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config));
            ExitCode::from(if config { 2 } else { 3 })
        }
    }
}
