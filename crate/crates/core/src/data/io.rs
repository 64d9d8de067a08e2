//! On-disk formats.
//!
//! Dataset file: one JSON object per line, one line per trajectory:
//!
//! ```text
//! {"id":0,"behaviour_kind":"expert(0.2)","actions":[3,1],"gt_rewards":[0,1],"observations":[[..],[..],[..]]}
//! ```
//!
//! `observations` has one more row than `actions`: the initial observation
//! followed by the observation after each step. Floats are written in their
//! shortest round-trip form, so values survive a save/load bit-exactly.
//!
//! Partition file: a single JSON document with the id lists of
//! [`DatasetPartition`] plus an `annotations` map from trajectory id to the
//! per-timestep label bits.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetPartition, GtAccess, TimestepAnnotation, Trajectory};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryRecord {
    id: u64,
    behaviour_kind: String,
    actions: Vec<u8>,
    gt_rewards: Vec<u8>,
    observations: Vec<Vec<f64>>,
}

/// Write `bytes` to `path` via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    {
        let mut f = BufWriter::new(fs::File::create(&tmp)?);
        f.write_all(bytes)?;
        f.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn dataset_to_string(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for t in dataset.trajectories() {
        let record = TrajectoryRecord {
            id: t.id(),
            behaviour_kind: t.behaviour().to_string(),
            actions: t.actions().to_vec(),
            gt_rewards: t.ground_truth(GtAccess::persistence()).to_vec(),
            observations: (0..=t.len()).map(|i| t.observation(i).to_vec()).collect(),
        };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    write_atomic(path, dataset_to_string(dataset)?.as_bytes())
}

pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut trajectories = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse { line: line_no, msg };
        let rec: TrajectoryRecord = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let dim = rec.observations.first().map_or(0, Vec::len);
        if rec.observations.iter().any(|row| row.len() != dim) {
            return Err(parse_err("observation rows differ in length".into()));
        }
        let flat: Vec<f64> = rec.observations.into_iter().flatten().collect();
        let t = Trajectory::new(rec.id, rec.behaviour_kind, dim, flat, rec.actions, rec.gt_rewards)
            .map_err(|e| parse_err(e.to_string()))?;
        trajectories.push(t);
    }
    Dataset::new(trajectories)
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    parse_dataset(BufReader::new(fs::File::open(path)?))
}

/// A partition together with whatever timestep annotations were collected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    #[serde(flatten)]
    pub partition: DatasetPartition,
    pub annotations: BTreeMap<u64, Vec<u8>>,
}

pub fn save_partition(partition: &DatasetPartition, annotations: &TimestepAnnotation, path: &Path) -> Result<()> {
    let file = PartitionFile {
        partition: partition.clone(),
        annotations: annotations.clone(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

pub fn load_partition(path: &Path) -> Result<(DatasetPartition, TimestepAnnotation)> {
    let text = fs::read_to_string(path)?;
    let file: PartitionFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    Ok((file.partition, file.annotations))
}
