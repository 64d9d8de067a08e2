use std::collections::{BTreeMap, BTreeSet};

use ndarray::ArrayView2;
use sha2::{Digest, Sha256};

use super::labels::SyntheticLabelSet;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{clamp_prob, sigmoid, Mlp};

/// Exact-match memory of observation vectors. Used for rewards that are
/// assigned to specific logged states rather than learnt.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateLookup {
    dim: usize,
    keys: BTreeSet<u64>,
}

impl StateLookup {
    pub fn new(dim: usize) -> Self {
        StateLookup {
            dim,
            keys: BTreeSet::new(),
        }
    }

    /// Stable 64-bit digest of the bit patterns of an observation.
    pub fn key(x: &[f64]) -> u64 {
        let mut h = Sha256::new();
        for v in x {
            h.update(v.to_bits().to_le_bytes());
        }
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }

    pub fn insert(&mut self, x: &[f64]) {
        self.keys.insert(Self::key(x));
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.keys.contains(&Self::key(x))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardFn {
    /// One logistic network.
    Single(Mlp),
    /// Mean probability of two logistic networks.
    Ensemble(Mlp, Mlp),
    /// High reward on remembered states, low everywhere else.
    Lookup(StateLookup),
}

/// A trained reward classifier `R(s) ∈ [ε, 1 - ε]` with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    pub reward: RewardFn,
    pub prob_clamp: f64,
    pub provenance: BTreeMap<String, String>,
}

impl RewardModel {
    pub fn single(net: Mlp, prob_clamp: f64) -> Self {
        RewardModel {
            reward: RewardFn::Single(net),
            prob_clamp,
            provenance: BTreeMap::new(),
        }
    }

    pub fn ensemble(a: Mlp, b: Mlp, prob_clamp: f64) -> Self {
        RewardModel {
            reward: RewardFn::Ensemble(a, b),
            prob_clamp,
            provenance: BTreeMap::new(),
        }
    }

    /// Remember every reward state whose hard label is 1.
    pub fn lookup(dataset: &Dataset, labels: &SyntheticLabelSet, prob_clamp: f64) -> Result<Self> {
        let mut table = StateLookup::new(dataset.obs_dim());
        for (&id, l) in &labels.labels {
            let traj = dataset.get(id)?;
            for (t, &y) in (1..=traj.len()).zip(&l.targets) {
                if y >= 0.5 {
                    table.insert(traj.reward_state(t));
                }
            }
        }
        Ok(RewardModel {
            reward: RewardFn::Lookup(table),
            prob_clamp,
            provenance: BTreeMap::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        match &self.reward {
            RewardFn::Single(n) | RewardFn::Ensemble(n, _) => n.input_dim(),
            RewardFn::Lookup(t) => t.dim(),
        }
    }

    fn net_probs(&self, net: &Mlp, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(net
            .logits(x)?
            .iter()
            .map(|&z| clamp_prob(sigmoid(z), self.prob_clamp))
            .collect())
    }

    /// Reward probabilities for a batch of observations (`rows × input_dim`).
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        match &self.reward {
            RewardFn::Single(n) => self.net_probs(n, x),
            RewardFn::Ensemble(a, b) => {
                let pa = self.net_probs(a, x)?;
                let pb = self.net_probs(b, x)?;
                Ok(pa.iter().zip(&pb).map(|(a, b)| 0.5 * (a + b)).collect())
            }
            RewardFn::Lookup(t) => Ok(x
                .rows()
                .into_iter()
                .map(|row| {
                    let row: Vec<f64> = row.iter().copied().collect();
                    if t.contains(&row) {
                        1.0 - self.prob_clamp
                    } else {
                        self.prob_clamp
                    }
                })
                .collect()),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.predict_batch(view)?[0])
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut provenance = self.provenance.clone();
        provenance.insert("prob_clamp".into(), self.prob_clamp.to_string());
        let (kind, networks) = match &self.reward {
            RewardFn::Single(n) => ("reward", vec![n.clone()]),
            RewardFn::Ensemble(a, b) => ("reward-ensemble", vec![a.clone(), b.clone()]),
            RewardFn::Lookup(t) => {
                provenance.insert("lookup_dim".into(), t.dim.to_string());
                provenance.insert(
                    "lookup_keys".into(),
                    serde_json::to_string(&t.keys).expect("keys serialise"),
                );
                ("reward-lookup", vec![])
            }
        };
        Checkpoint {
            kind: kind.into(),
            networks,
            provenance,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        let mut provenance = ck.provenance;
        let field = |p: &mut BTreeMap<String, String>, k: &str| {
            p.remove(k)
                .ok_or_else(|| Error::Data(format!("reward checkpoint lacks `{k}`")))
        };
        let prob_clamp: f64 = field(&mut provenance, "prob_clamp")?
            .parse()
            .map_err(|e| Error::Data(format!("bad prob_clamp: {e}")))?;
        let mut nets = ck.networks.into_iter();
        let reward = match ck.kind.as_str() {
            "reward" => match (nets.next(), nets.next()) {
                (Some(n), None) => RewardFn::Single(n),
                _ => return Err(Error::Data("reward checkpoint needs one network".into())),
            },
            "reward-ensemble" => match (nets.next(), nets.next(), nets.next()) {
                (Some(a), Some(b), None) => RewardFn::Ensemble(a, b),
                _ => return Err(Error::Data("ensemble checkpoint needs two networks".into())),
            },
            "reward-lookup" => {
                let dim = field(&mut provenance, "lookup_dim")?
                    .parse()
                    .map_err(|e| Error::Data(format!("bad lookup_dim: {e}")))?;
                let keys = serde_json::from_str(&field(&mut provenance, "lookup_keys")?)?;
                RewardFn::Lookup(StateLookup { dim, keys })
            }
            other => return Err(Error::Data(format!("`{other}` is not a reward checkpoint"))),
        };
        Ok(RewardModel {
            reward,
            prob_clamp,
            provenance,
        })
    }
}
