use std::collections::BTreeMap;

use rand::Rng as _;

use super::{Dataset, GtAccess};
use crate::error::{Error, Result};
use crate::seed;

/// Per-timestep binary reward labels for a set of annotated episodes.
/// `labels[id][t - 1]` is the label of timestep `t`.
pub type TimestepAnnotation = BTreeMap<u64, Vec<u8>>;

/// Simulated human annotator. With `flip_probability = 0` it copies the
/// ground truth exactly.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Annotator {
    pub flip_probability: f64,
    pub seed: u64,
}

impl Annotator {
    pub fn annotate(&self, dataset: &Dataset, ids: &[u64]) -> Result<TimestepAnnotation> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Config(format!(
                "flip probability {} not in [0, 1]",
                self.flip_probability
            )));
        }
        let mut rng = seed::rng(seed::derive_str(self.seed, "annotator"));
        let mut out = TimestepAnnotation::new();
        for &id in ids {
            let labels = dataset.get(id)?.ground_truth(GtAccess::annotation());
            let labels = if self.flip_probability > 0.0 {
                labels
                    .iter()
                    .map(|&b| {
                        if rng.random::<f64>() < self.flip_probability {
                            1 - b
                        } else {
                            b
                        }
                    })
                    .collect()
            } else {
                labels.to_vec()
            };
            out.insert(id, labels);
        }
        Ok(out)
    }
}

/// Perfect timestep annotation of the given episodes.
pub fn annotate_timesteps(dataset: &Dataset, ids: &[u64]) -> Result<TimestepAnnotation> {
    Annotator::default().annotate(dataset, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trajectory;

    fn dataset() -> Dataset {
        let mk = |id: u64, r: Vec<u8>| {
            let t = r.len();
            Trajectory::new(id, "x", 1, vec![0.0; t + 1], vec![0; t], r).unwrap()
        };
        Dataset::new(vec![mk(0, vec![0, 0, 1, 1]), mk(1, vec![0, 1]), mk(2, vec![0; 5])]).unwrap()
    }

    #[test]
    fn copies_ground_truth() {
        let ann = annotate_timesteps(&dataset(), &[0]).unwrap();
        assert_eq!(ann[&0], vec![0, 0, 1, 1]);
        assert_eq!(ann.len(), 1);
    }

    #[test]
    fn unknown_id_is_lookup_error() {
        assert!(matches!(annotate_timesteps(&dataset(), &[9]), Err(Error::Lookup(9))));
    }

    #[test]
    fn label_count_is_total_length() {
        let ann = annotate_timesteps(&dataset(), &[0, 1, 2]).unwrap();
        assert_eq!(ann.values().map(Vec::len).sum::<usize>(), 4 + 2 + 5);
    }

    #[test]
    fn noisy_annotator_flips_everything_at_probability_one() {
        let a = Annotator {
            flip_probability: 1.0,
            seed: 0,
        };
        let ann = a.annotate(&dataset(), &[0]).unwrap();
        assert_eq!(ann[&0], vec![1, 1, 0, 0]);
    }
}
