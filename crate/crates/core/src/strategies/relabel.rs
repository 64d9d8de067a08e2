use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use ndarray::ArrayView2;

use super::model::RewardModel;
use crate::data::io::write_atomic;
use crate::data::{Dataset, GtAccess};
use crate::error::{Error, Result};
use crate::metrics::ScoredTimesteps;

/// Per-timestep rewards: `table[id][t - 1]` is the reward of timestep `t`.
pub type RewardTable = BTreeMap<u64, Vec<f64>>;

fn reward_states(dataset: &Dataset, id: u64) -> Result<ArrayView2<'_, f64>> {
    let traj = dataset.get(id)?;
    let rows = &traj.observations()[traj.obs_dim()..];
    Ok(ArrayView2::from_shape((traj.len(), traj.obs_dim()), rows).expect("reward states"))
}

/// Predicted rewards `R(s_t)` for every timestep of the given episodes.
pub fn relabel(model: &RewardModel, dataset: &Dataset, ids: &[u64]) -> Result<RewardTable> {
    let mut out = RewardTable::new();
    for &id in ids {
        out.insert(id, model.predict_batch(reward_states(dataset, id)?)?);
    }
    Ok(out)
}

/// The environment's own rewards, for the ground-truth reference agent.
pub fn ground_truth_rewards(dataset: &Dataset, ids: &[u64]) -> Result<RewardTable> {
    let mut out = RewardTable::new();
    for &id in ids {
        let gt = dataset.get(id)?.ground_truth(GtAccess::gt_agent());
        out.insert(id, gt.iter().map(|&b| f64::from(b)).collect());
    }
    Ok(out)
}

/// Scores of a reward model on the validation episodes paired with their
/// true timestep labels.
pub fn validation_scores(model: &RewardModel, dataset: &Dataset, ids: &[u64]) -> Result<ScoredTimesteps> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for &id in ids {
        scores.extend(model.predict_batch(reward_states(dataset, id)?)?);
        labels.extend_from_slice(dataset.get(id)?.ground_truth(GtAccess::validation()));
    }
    ScoredTimesteps::new(scores, labels)
}

/// CSV with columns `id,t,reward` and 1-based `t`.
pub fn rewards_to_csv(table: &RewardTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "t", "reward"])?;
    for (id, rewards) in table {
        for (i, r) in rewards.iter().enumerate() {
            w.write_record([id.to_string(), (i + 1).to_string(), r.to_string()])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn save_rewards(table: &RewardTable, path: &Path) -> Result<()> {
    write_atomic(path, rewards_to_csv(table)?.as_bytes())
}

pub fn parse_rewards<R: Read>(reader: R) -> Result<RewardTable> {
    let mut r = csv::Reader::from_reader(reader);
    let mut out = RewardTable::new();
    for (i, rec) in r.deserialize::<(u64, usize, f64)>().enumerate() {
        let line = i + 2;
        let (id, t, reward) = rec.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let v = out.entry(id).or_default();
        if t != v.len() + 1 || !reward.is_finite() {
            return Err(Error::Parse {
                line,
                msg: format!("timestep {t} of trajectory {id} out of order or non-finite"),
            });
        }
        v.push(reward);
    }
    Ok(out)
}

pub fn load_rewards(path: &Path) -> Result<RewardTable> {
    parse_rewards(std::fs::File::open(path)?)
}
