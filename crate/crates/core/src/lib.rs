//! Reward learning from limited supervision for offline reinforcement learning.
//!
//! The crate is organised as a pipeline:
//!
//! 1. [`env`] simulates a sparse-reward gridworld and the scripted behaviour
//!    policies that produce logged data.
//! 2. [`data`] turns rollouts into datasets, simulates episode-level and
//!    timestep-level annotation, and partitions the data.
//! 3. [`strategies`] learns reward models from the limited supervision
//!    (flat labels, time-guided labels, iterative cross-refinement,
//!    supervised and semi-supervised timestep labels) and relabels the data.
//! 4. [`agents`] trains offline policies (behavioural cloning and
//!    critic-regularised regression) on the relabelled data.
//! 5. [`metrics`] scores reward models as timestep classifiers.
//! 6. [`harness`] wires the stages into reproducible experiments.
//!
//! [`nn`] holds the small feed-forward network machinery shared by all learners.

pub mod agents;
pub mod data;
pub mod env;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod nn;
pub mod seed;
pub mod strategies;

pub use error::{Error, Result};
