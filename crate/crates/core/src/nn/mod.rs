//! Small fully connected networks with hand-written backpropagation, an
//! adaptive-moment optimiser, a finite-difference gradient checker, and
//! checkpoint files.

mod adam;
pub mod checkpoint;
mod gradcheck;
pub mod loss;
mod mlp;

pub use adam::Adam;
pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use mlp::{clamp_prob, gather_rows, relu, sigmoid, softmax_in_place, softmax_rows, ForwardCache, Head, Mlp};

use serde::{Deserialize, Serialize};

/// Mini-batch training settings shared by all learners.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSpec {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    pub seed: u64,
    /// Probabilities are clamped to `[prob_clamp, 1 - prob_clamp]`.
    pub prob_clamp: f64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        TrainSpec {
            batch_size: 256,
            steps: 1000,
            learning_rate: 1e-3,
            hidden: vec![64, 64],
            seed: 0,
            prob_clamp: 1e-6,
        }
    }
}

impl TrainSpec {
    pub fn validate(&self) -> crate::Result<()> {
        if self.batch_size == 0 {
            return Err(crate::Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(crate::Error::Config("learning_rate must be positive".into()));
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return Err(crate::Error::Config("prob_clamp must lie in (0, 0.5)".into()));
        }
        Ok(())
    }

    /// Layer sizes `[input, hidden.., output]`.
    pub fn layer_sizes(&self, input: usize, output: usize) -> Vec<usize> {
        let mut s = Vec::with_capacity(self.hidden.len() + 2);
        s.push(input);
        s.extend_from_slice(&self.hidden);
        s.push(output);
        s
    }
}
