//! CSV emission. Column sets are fixed; floats use the shortest text that
//! round-trips, so identical runs give identical bytes.

use std::path::Path;

use super::config::Condition;
use super::pipeline::{Candidate, CurvePoint};
use crate::data::io::write_atomic;
use crate::error::{Error, Result};
use crate::metrics::SelectionCriterion;

pub const CURVE_COLUMNS: [&str; 6] = ["preset", "strategy", "seed", "step", "mean_return", "success_rate"];
pub const REWARD_METRICS_COLUMNS: [&str; 8] = [
    "strategy",
    "config_hash",
    "t0",
    "iter",
    "precision",
    "recall",
    "f_score",
    "auc_pr",
];
pub const SUMMARY_COLUMNS: [&str; 5] = ["preset", "strategy", "seed", "mean_return", "success_rate"];
pub const SELECTION_COLUMNS: [&str; 6] = ["strategy", "criterion", "config_hash", "t0", "iter", "value"];
pub const EVAL_COLUMNS: [&str; 6] = ["preset", "strategy", "seed", "episodes", "mean_return", "success_rate"];

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub preset: String,
    pub condition: Condition,
    pub seed: u64,
    pub point: CurvePoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub preset: String,
    pub condition: Condition,
    pub seed: u64,
    pub mean_return: f64,
    pub success_rate: f64,
}

fn to_string(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn curves_csv(rows: &[CurveRow]) -> Result<String> {
    to_string(
        &CURVE_COLUMNS,
        rows.iter()
            .map(|r| {
                vec![
                    r.preset.clone(),
                    r.condition.name().into(),
                    r.seed.to_string(),
                    r.point.step.to_string(),
                    r.point.mean_return.to_string(),
                    r.point.success_rate.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn parse_curve_csv(text: &str) -> Result<Vec<CurveRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CURVE_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unexpected curve columns {header:?}"),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.deserialize::<(String, String, u64, usize, f64, f64)>().enumerate() {
        let (preset, strategy, seed, step, mean_return, success_rate) = rec.map_err(|e| Error::Parse {
            line: i + 2,
            msg: e.to_string(),
        })?;
        out.push(CurveRow {
            preset,
            condition: strategy.parse()?,
            seed,
            point: CurvePoint {
                step,
                mean_return,
                success_rate,
            },
        });
    }
    Ok(out)
}

pub fn reward_metrics_csv(candidates: &[Candidate]) -> Result<String> {
    to_string(
        &REWARD_METRICS_COLUMNS,
        candidates
            .iter()
            .map(|c| {
                vec![
                    c.strategy.name().into(),
                    c.config_hash.clone(),
                    c.t0.to_string(),
                    c.iter.to_string(),
                    c.metrics.precision.to_string(),
                    c.metrics.recall.to_string(),
                    c.metrics.f_score.to_string(),
                    c.metrics.auc_pr.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn selections_csv(rows: &[(Candidate, SelectionCriterion)]) -> Result<String> {
    to_string(
        &SELECTION_COLUMNS,
        rows.iter()
            .map(|(c, crit)| {
                vec![
                    c.strategy.name().into(),
                    crit.name().into(),
                    c.config_hash.clone(),
                    c.t0.to_string(),
                    c.iter.to_string(),
                    crit.value(&c.metrics).to_string(),
                ]
            })
            .collect(),
    )
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<String> {
    to_string(
        &SUMMARY_COLUMNS,
        rows.iter()
            .map(|r| {
                vec![
                    r.preset.clone(),
                    r.condition.name().into(),
                    r.seed.to_string(),
                    r.mean_return.to_string(),
                    r.success_rate.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn eval_csv(rows: &[(String, Condition, u64, crate::agents::EvalReport)]) -> Result<String> {
    to_string(
        &EVAL_COLUMNS,
        rows.iter()
            .map(|(preset, c, seed, r)| {
                vec![
                    preset.clone(),
                    c.name().into(),
                    seed.to_string(),
                    r.episodes.to_string(),
                    r.mean_return.to_string(),
                    r.success_rate.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_atomic(path, text.as_bytes())
}
