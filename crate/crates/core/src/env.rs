//! Sparse binary-reward gridworld and the scripted behaviour policies used to
//! log datasets.
//!
//! The agent moves on a `width × height` grid towards a goal cell. The reward
//! is 1 exactly on steps that end with the agent on the goal. An episode ends
//! `success_grace` steps after the first success, or after `max_steps` steps.
//! Observations are `[one-hot(agent), one-hot(goal), noise]`, where the noise
//! dimensions are uniform draws that carry no information about the task.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const NUM_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub fn new(x: usize, y: usize) -> Self {
        Cell { x, y }
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalPlacement {
    Fixed { x: usize, y: usize },
    Random,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub noise_dims: usize,
    pub success_grace: usize,
    pub max_steps: usize,
    pub goal: GoalPlacement,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            width: 7,
            height: 7,
            noise_dims: 8,
            success_grace: 5,
            max_steps: 60,
            goal: GoalPlacement::Fixed { x: 6, y: 6 },
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::Config(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.max_steps < 1 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        if let GoalPlacement::Fixed { x, y } = self.goal {
            if x >= self.width || y >= self.height {
                return Err(Error::Config(format!(
                    "fixed goal ({x}, {y}) lies outside the {}x{} grid",
                    self.width, self.height
                )));
            }
        }
        Ok(())
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn obs_dim(&self) -> usize {
        2 * self.num_cells() + self.noise_dims
    }

    fn cell_index(&self, c: Cell) -> usize {
        c.y * self.width + c.x
    }

    fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.width, index / self.width)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Action {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Stay];

    pub fn from_id(id: usize) -> Result<Action> {
        Action::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::Usage(format!("action id {id} out of range")))
    }

    pub fn id(self) -> usize {
        self as usize
    }
}

/// Environment state. Value type; stepping returns a new state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvState {
    pub agent: Cell,
    pub goal: Cell,
    pub t: usize,
    pub steps_since_success: Option<usize>,
    noise_seed: u64,
}

impl EnvState {
    pub fn is_done(&self, spec: &GridSpec) -> bool {
        self.t >= spec.max_steps || self.steps_since_success.is_some_and(|s| s >= spec.success_grace)
    }

    /// Place agent and goal explicitly. Mostly useful for tests and oracles.
    pub fn with_cells(spec: &GridSpec, agent: Cell, goal: Cell, seed: u64) -> Result<EnvState> {
        spec.validate()?;
        for c in [agent, goal] {
            if c.x >= spec.width || c.y >= spec.height {
                return Err(Error::Config(format!("cell ({}, {}) outside grid", c.x, c.y)));
            }
        }
        Ok(EnvState {
            agent,
            goal,
            t: 0,
            steps_since_success: None,
            noise_seed: seed::derive_str(seed, "noise"),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: u8,
    pub done: bool,
}

pub fn reset(spec: &GridSpec, seed: u64) -> Result<EnvState> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive_str(seed, "reset"));
    let n = spec.num_cells();
    let goal = match spec.goal {
        GoalPlacement::Fixed { x, y } => Cell::new(x, y),
        GoalPlacement::Random => spec.cell_at(rng.random_range(0..n)),
    };
    // Uniform over the n - 1 cells other than the goal.
    let goal_idx = spec.cell_index(goal);
    let mut idx = rng.random_range(0..n - 1);
    if idx >= goal_idx {
        idx += 1;
    }
    EnvState::with_cells(spec, spec.cell_at(idx), goal, seed)
}

pub fn step(spec: &GridSpec, state: &EnvState, action: Action) -> Result<StepOutcome> {
    if state.is_done(spec) {
        return Err(Error::Usage("step called on a finished episode".into()));
    }
    let Cell { x, y } = state.agent;
    let agent = match action {
        Action::Up => Cell::new(x, y.saturating_sub(1)),
        Action::Down => Cell::new(x, (y + 1).min(spec.height - 1)),
        Action::Left => Cell::new(x.saturating_sub(1), y),
        Action::Right => Cell::new((x + 1).min(spec.width - 1), y),
        Action::Stay => state.agent,
    };
    let reward = u8::from(agent == state.goal);
    let steps_since_success = match state.steps_since_success {
        Some(s) => Some(s + 1),
        None if reward == 1 => Some(0),
        None => None,
    };
    let next = EnvState {
        agent,
        goal: state.goal,
        t: state.t + 1,
        steps_since_success,
        noise_seed: state.noise_seed,
    };
    let done = next.is_done(spec);
    Ok(StepOutcome {
        state: next,
        reward,
        done,
    })
}

pub fn observe(spec: &GridSpec, state: &EnvState) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.obs_dim());
    observe_into(spec, state, &mut out);
    out
}

/// Appends the observation of `state` to `out`.
pub fn observe_into(spec: &GridSpec, state: &EnvState, out: &mut Vec<f64>) {
    let n = spec.num_cells();
    let start = out.len();
    out.resize(start + 2 * n, 0.0);
    out[start + spec.cell_index(state.agent)] = 1.0;
    out[start + n + spec.cell_index(state.goal)] = 1.0;
    if spec.noise_dims > 0 {
        let mut rng = seed::rng(seed::derive(state.noise_seed, state.t as u64));
        out.extend((0..spec.noise_dims).map(|_| rng.random::<f64>()));
    }
}

/// Scripted data-collection policies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BehaviourPolicy {
    /// Shortest-path mover that takes a uniformly random action with
    /// probability `epsilon`.
    Expert {
        epsilon: f64,
    },
    Random,
    /// Shortest-path mover until `switch_t`, uniformly random afterwards.
    Wandering {
        switch_t: usize,
    },
}

impl BehaviourPolicy {
    pub fn validate(&self) -> Result<()> {
        if let BehaviourPolicy::Expert { epsilon } = *self {
            if !(0.0..=1.0).contains(&epsilon) {
                return Err(Error::Config(format!("expert epsilon {epsilon} not in [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        match self {
            BehaviourPolicy::Expert { epsilon } => format!("expert({epsilon})"),
            BehaviourPolicy::Random => "random".to_string(),
            BehaviourPolicy::Wandering { switch_t } => format!("wandering({switch_t})"),
        }
    }
}

/// Distance-reducing action with the smallest id; `Stay` when already on the goal.
pub fn expert_action(state: &EnvState) -> Action {
    let (a, g) = (state.agent, state.goal);
    if g.y < a.y {
        Action::Up
    } else if g.y > a.y {
        Action::Down
    } else if g.x < a.x {
        Action::Left
    } else if g.x > a.x {
        Action::Right
    } else {
        Action::Stay
    }
}

fn uniform_action(rng: &mut Rng) -> Action {
    Action::ALL[rng.random_range(0..NUM_ACTIONS)]
}

pub fn behaviour_action(kind: &BehaviourPolicy, state: &EnvState, rng: &mut Rng) -> Action {
    match *kind {
        BehaviourPolicy::Expert { epsilon } => {
            if epsilon > 0.0 && rng.random::<f64>() < epsilon {
                uniform_action(rng)
            } else {
                expert_action(state)
            }
        }
        BehaviourPolicy::Random => uniform_action(rng),
        BehaviourPolicy::Wandering { switch_t } => {
            if state.t < switch_t {
                expert_action(state)
            } else {
                uniform_action(rng)
            }
        }
    }
}

/// A rolled-out episode. `observations` holds `T + 1` rows of `obs_dim`
/// values: the initial observation followed by the observation after each step.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub obs_dim: usize,
    pub observations: Vec<f64>,
    pub actions: Vec<u8>,
    pub rewards: Vec<u8>,
}

/// Roll out one episode, choosing actions with `choose(state, observation, rng)`.
pub fn rollout<F>(spec: &GridSpec, seed: u64, mut choose: F) -> Result<Episode>
where
    F: FnMut(&EnvState, &[f64], &mut Rng) -> Action,
{
    let mut state = reset(spec, seed)?;
    let mut rng = seed::rng(seed::derive_str(seed, "actions"));
    let dim = spec.obs_dim();
    let mut observations = Vec::with_capacity(dim * 16);
    observe_into(spec, &state, &mut observations);
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    loop {
        let start = observations.len() - dim;
        let action = choose(&state, &observations[start..], &mut rng);
        let out = step(spec, &state, action)?;
        actions.push(action as u8);
        rewards.push(out.reward);
        state = out.state;
        observe_into(spec, &state, &mut observations);
        if out.done {
            break;
        }
    }
    Ok(Episode {
        obs_dim: dim,
        observations,
        actions,
        rewards,
    })
}

/// Roll out a scripted behaviour policy.
pub fn behaviour_rollout(spec: &GridSpec, kind: &BehaviourPolicy, seed: u64) -> Result<Episode> {
    rollout(spec, seed, |state, _, rng| behaviour_action(kind, state, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    fn open_spec(w: usize, h: usize) -> GridSpec {
        GridSpec {
            width: w,
            height: h,
            noise_dims: 0,
            goal: GoalPlacement::Random,
            ..GridSpec::default()
        }
    }

    #[test]
    fn reset_is_deterministic() {
        let spec = GridSpec::default();
        assert_eq!(reset(&spec, 0).unwrap(), reset(&spec, 0).unwrap());
    }

    #[test]
    fn reset_two_by_two_separates_agent_and_goal() {
        let spec = open_spec(2, 2);
        for seed in 0..200 {
            let s = reset(&spec, seed).unwrap();
            assert_ne!(s.agent, s.goal);
            assert_eq!(s.t, 0);
        }
    }

    #[test]
    fn reset_start_cells_vary() {
        let spec = GridSpec::default();
        let starts: HashSet<Cell> = (0..100).map(|s| reset(&spec, s).unwrap().agent).collect();
        assert!(starts.len() >= 2);
    }

    #[test]
    fn invalid_spec_rejected() {
        let spec = GridSpec {
            width: 1,
            ..GridSpec::default()
        };
        assert!(matches!(reset(&spec, 0), Err(Error::Config(_))));
        let spec = GridSpec {
            goal: GoalPlacement::Fixed { x: 9, y: 0 },
            ..GridSpec::default()
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn boundary_clipping() {
        let spec = GridSpec::default();
        let s = EnvState::with_cells(&spec, Cell::new(0, 0), Cell::new(3, 3), 0).unwrap();
        let out = step(&spec, &s, Action::Left).unwrap();
        assert_eq!(out.state.agent, Cell::new(0, 0));
        let out = step(&spec, &s, Action::Up).unwrap();
        assert_eq!(out.state.agent, Cell::new(0, 0));
    }

    #[test]
    fn reward_on_reaching_goal() {
        let spec = GridSpec::default();
        let s = EnvState::with_cells(&spec, Cell::new(2, 3), Cell::new(3, 3), 0).unwrap();
        let out = step(&spec, &s, Action::Right).unwrap();
        assert_eq!(out.reward, 1);
        assert!(!out.done);
    }

    #[test]
    fn grace_period_after_success() {
        let spec = GridSpec::default();
        // Goal 10 steps to the right along a row of a wide grid.
        let spec = GridSpec { width: 12, ..spec };
        let goal = Cell::new(10, 0);
        let mut s = EnvState::with_cells(&spec, Cell::new(0, 0), goal, 0).unwrap();
        let mut rewards = Vec::new();
        let mut done_at = None;
        for _ in 0..30 {
            let a = expert_action(&s);
            let out = step(&spec, &s, a).unwrap();
            rewards.push(out.reward);
            s = out.state;
            if out.done {
                done_at = Some(s.t);
                break;
            }
        }
        assert_eq!(done_at, Some(15));
        // 1-based step index t: rewards at t = 10..=15.
        let expected: Vec<u8> = (1..=15).map(|t| u8::from(t >= 10)).collect();
        assert_eq!(rewards, expected);
    }

    #[test]
    fn step_after_done_is_usage_error() {
        let spec = GridSpec {
            max_steps: 1,
            ..GridSpec::default()
        };
        let s = reset(&spec, 3).unwrap();
        let out = step(&spec, &s, Action::Stay).unwrap();
        assert!(out.done);
        assert!(matches!(step(&spec, &out.state, Action::Stay), Err(Error::Usage(_))));
    }

    #[test]
    fn observation_layout() {
        let spec = open_spec(2, 2);
        let s = EnvState::with_cells(&spec, Cell::new(0, 0), Cell::new(1, 1), 0).unwrap();
        assert_eq!(observe(&spec, &s), vec![1., 0., 0., 0., 0., 0., 0., 1.]);
    }

    #[test]
    fn observation_blocks_and_noise() {
        let spec = GridSpec::default();
        let s = reset(&spec, 11).unwrap();
        let o = observe(&spec, &s);
        let n = spec.num_cells();
        assert_eq!(o.len(), spec.obs_dim());
        assert_eq!(o[..n].iter().sum::<f64>(), 1.0);
        assert_eq!(o[n..2 * n].iter().sum::<f64>(), 1.0);
        assert!(o[2 * n..].iter().all(|v| (0.0..1.0).contains(v)));
        assert_eq!(o, observe(&spec, &s));
        let next = step(&spec, &s, Action::Stay).unwrap().state;
        assert_ne!(o[2 * n..], observe(&spec, &next)[2 * n..]);
    }

    #[test]
    fn expert_moves() {
        let spec = GridSpec::default();
        let s = EnvState::with_cells(&spec, Cell::new(0, 0), Cell::new(3, 0), 0).unwrap();
        assert_eq!(expert_action(&s), Action::Right);
        let s = EnvState::with_cells(&spec, Cell::new(0, 0), Cell::new(2, 2), 0).unwrap();
        // Down (id 1) precedes Right (id 3) in the tie order.
        assert_eq!(expert_action(&s), Action::Down);
        let mut rng = seed::rng(0);
        let kind = BehaviourPolicy::Expert { epsilon: 0.0 };
        assert_eq!(behaviour_action(&kind, &s, &mut rng), Action::Down);
    }

    #[test]
    fn fully_random_expert_is_uniform() {
        let spec = GridSpec::default();
        let s = reset(&spec, 0).unwrap();
        let kind = BehaviourPolicy::Expert { epsilon: 1.0 };
        let mut rng = seed::rng(42);
        let mut counts = [0usize; NUM_ACTIONS];
        for _ in 0..10_000 {
            counts[behaviour_action(&kind, &s, &mut rng).id()] += 1;
        }
        for c in counts {
            let f = c as f64 / 10_000.0;
            assert!((f - 0.2).abs() < 0.02, "frequency {f}");
        }
    }

    #[test]
    fn wandering_switches_to_random() {
        let spec = GridSpec::default();
        let kind = BehaviourPolicy::Wandering { switch_t: 2 };
        let mut s = EnvState::with_cells(&spec, Cell::new(0, 0), Cell::new(6, 6), 0).unwrap();
        let mut rng = seed::rng(1);
        assert_eq!(behaviour_action(&kind, &s, &mut rng), Action::Down);
        s.t = 2;
        let mut seen = HashSet::new();
        for _ in 0..200 {
            seen.insert(behaviour_action(&kind, &s, &mut rng));
        }
        assert_eq!(seen.len(), NUM_ACTIONS);
    }

    #[test]
    fn episode_length_bounded() {
        let spec = GridSpec::default();
        let kinds = [
            BehaviourPolicy::Expert { epsilon: 0.2 },
            BehaviourPolicy::Random,
            BehaviourPolicy::Wandering { switch_t: 3 },
        ];
        for seed in 0..1000u64 {
            let kind = &kinds[(seed % 3) as usize];
            let ep = behaviour_rollout(&spec, kind, seed).unwrap();
            assert!(ep.actions.len() <= spec.max_steps + spec.success_grace);
            assert_eq!(ep.observations.len(), (ep.actions.len() + 1) * spec.obs_dim());
        }
    }

    #[test]
    fn rewards_match_replay() {
        let spec = GridSpec {
            goal: GoalPlacement::Random,
            ..GridSpec::default()
        };
        let n = spec.num_cells();
        for seed in 0..200u64 {
            let ep = behaviour_rollout(&spec, &BehaviourPolicy::Random, seed).unwrap();
            for (t, &r) in ep.rewards.iter().enumerate() {
                let row = &ep.observations[(t + 1) * spec.obs_dim()..];
                let agent = row[..n].iter().position(|&v| v == 1.0).unwrap();
                let goal = row[n..2 * n].iter().position(|&v| v == 1.0).unwrap();
                assert_eq!(r == 1, agent == goal);
            }
        }
    }

    fn bfs_distance(spec: &GridSpec, from: Cell, to: Cell) -> usize {
        let mut dist = vec![usize::MAX; spec.num_cells()];
        let mut q = VecDeque::new();
        dist[spec.cell_index(from)] = 0;
        q.push_back(from);
        while let Some(c) = q.pop_front() {
            let d = dist[spec.cell_index(c)];
            let s = EnvState::with_cells(spec, c, to, 0).unwrap();
            for a in Action::ALL {
                let n = step(spec, &s, a).unwrap().state.agent;
                if dist[spec.cell_index(n)] == usize::MAX {
                    dist[spec.cell_index(n)] = d + 1;
                    q.push_back(n);
                }
            }
        }
        dist[spec.cell_index(to)]
    }

    #[test]
    fn expert_follows_shortest_paths() {
        let spec = GridSpec {
            width: 5,
            height: 5,
            max_steps: 100,
            goal: GoalPlacement::Random,
            ..GridSpec::default()
        };
        for a in 0..25 {
            for g in 0..25 {
                if a == g {
                    continue;
                }
                let (from, to) = (spec.cell_at(a), spec.cell_at(g));
                let mut s = EnvState::with_cells(&spec, from, to, 0).unwrap();
                let mut steps = 0;
                while s.agent != to {
                    s = step(&spec, &s, expert_action(&s)).unwrap().state;
                    steps += 1;
                }
                assert_eq!(steps, bfs_distance(&spec, from, to));
                assert_eq!(steps, from.manhattan(to));
            }
        }
    }

    #[test]
    fn rollout_is_pure() {
        let spec = GridSpec::default();
        let kind = BehaviourPolicy::Expert { epsilon: 0.2 };
        assert_eq!(
            behaviour_rollout(&spec, &kind, 5).unwrap(),
            behaviour_rollout(&spec, &kind, 5).unwrap()
        );
    }
}
