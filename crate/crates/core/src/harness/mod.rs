//! Experiment harness: TOML configuration and presets, the staged pipeline
//! (data → reward → relabel → agent → evaluation), CSV reports and the
//! resumable on-disk runner used by the CLI.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod run;

pub use config::{preset, AnnotationLevel, Condition, ExperimentConfig, T0Reference, PRESETS};
pub use pipeline::{AgentRun, Candidate, CurvePoint, RefinementTrace, RewardStage, SeedData};
pub use report::{CurveRow, SummaryRow};
pub use run::{run_study, RunRecord, StudyOutput, Workspace};
