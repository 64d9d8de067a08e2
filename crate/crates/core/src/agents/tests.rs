use super::*;
use crate::data::{generate_dataset, PolicyMixEntry, Trajectory};
use crate::env::{Action, BehaviourPolicy, GoalPlacement, GridSpec};
use crate::strategies::ground_truth_rewards;

fn small_config(steps: usize) -> AgentConfig {
    AgentConfig {
        steps,
        batch_size: 32,
        hidden: vec![16],
        learning_rate: 3e-3,
        seed: 3,
        ..AgentConfig::default()
    }
}

fn no_checkpoints(_: usize, _: &Mlp) -> Result<()> {
    Ok(())
}

/// Two states (one-hot); action 1 from s0 ends the episode with reward 1,
/// action 0 loops on s0 with reward 0.
fn chain() -> Transitions {
    let mut t = Transitions::new(2, 2);
    for _ in 0..4 {
        t.push(&[1.0, 0.0], 1, 1.0, &[0.0, 1.0], true).unwrap();
        t.push(&[1.0, 0.0], 0, 0.0, &[1.0, 0.0], false).unwrap();
    }
    t
}

#[test]
fn chain_critic_and_policy_converge() {
    let cfg = AgentConfig {
        discount: 0.9,
        target_sync: 50,
        ..small_config(3000)
    };
    let out = crr_train(&chain(), &cfg, no_checkpoints).unwrap();
    let q = out.critic.logits_one(&[1.0, 0.0]).unwrap();
    let pi = out.policy.probs_one(&[1.0, 0.0]).unwrap();
    assert!((q[1] - 1.0).abs() < 0.05, "Q(s0,a1) = {}", q[1]);
    assert!((q[0] - 0.9).abs() < 0.05, "Q(s0,a0) = {}", q[0]);
    assert!(pi[1] > 0.9);
}

#[test]
fn zero_rewards_leave_policy_at_initialisation() {
    let mut t = chain();
    t.rewards.iter_mut().for_each(|r| *r = 0.0);
    let cfg = small_config(300);
    let out = crr_train(&t, &cfg, no_checkpoints).unwrap();
    let init = cfg.new_policy(2, 2).unwrap();
    assert_eq!(out.policy.params(), init.params());
    let adv = advantages(
        &out.policy,
        &out.critic,
        ndarray::ArrayView2::from_shape((1, 2), &[1.0, 0.0]).unwrap(),
        &[1],
    )
    .unwrap();
    assert!(adv[0].abs() < 1e-12);
}

#[test]
fn binary_weights_ignore_positive_reward_scaling() {
    use rand::Rng as _;
    let mut rng = crate::seed::rng(4);
    let mut policy = Mlp::new(&[3, 6, 5], Head::Softmax, 1).unwrap();
    let mut critic = Mlp::new(&[3, 6, 5], Head::Linear, 2).unwrap();
    for p in policy.params_mut().iter_mut().chain(critic.params_mut()) {
        *p = rng.random_range(-1.0..1.0);
    }
    let x = ndarray::Array2::from_shape_fn((20, 3), |_| rng.random_range(-1.0..1.0));
    let a: Vec<usize> = (0..20).map(|i| i % 5).collect();
    let adv = advantages(&policy, &critic, x.view(), &a).unwrap();
    // A critic fitted to rewards scaled by c is the same critic with its
    // output layer scaled by c.
    let c = 3.7;
    let mut scaled = critic.clone();
    let n = scaled.params().len();
    let out_block = n - (6 * 5 + 5);
    for p in &mut scaled.params_mut()[out_block..] {
        *p *= c;
    }
    let adv_c = advantages(&policy, &scaled, x.view(), &a).unwrap();
    for (u, v) in adv.iter().zip(&adv_c) {
        assert!((v - c * u).abs() < 1e-9);
    }
    assert_eq!(
        crr_weights(&adv, WeightRule::Binary),
        crr_weights(&adv_c, WeightRule::Binary)
    );
    assert!(adv.iter().any(|&a| a > 0.0) && adv.iter().any(|&a| a < 0.0));
}

#[test]
fn exponential_weights_are_clipped() {
    let w = crr_weights(&[0.0, 1.0, 100.0, -5.0], WeightRule::Exponential { beta: 1.0 });
    assert_eq!(w[0], 1.0);
    assert!((w[1] - std::f64::consts::E).abs() < 1e-12);
    assert_eq!(w[2], 20.0);
    assert!(w[3] > 0.0 && w[3] < 0.01);
}

fn grid(w: usize, noise: usize) -> GridSpec {
    GridSpec {
        width: w,
        height: w,
        noise_dims: noise,
        goal: GoalPlacement::Fixed { x: w - 1, y: w - 1 },
        ..GridSpec::default()
    }
}

#[test]
fn bc_on_expert_demos_solves_small_grid() {
    let spec = grid(3, 0);
    let mix = vec![PolicyMixEntry {
        policy: BehaviourPolicy::Expert { epsilon: 0.0 },
        weight: 1.0,
    }];
    let ds = Dataset::new(generate_dataset(&spec, 60, &mix, 1).unwrap()).unwrap();
    let policy = bc_train(&ds, &ds.ids(), &small_config(1500), no_checkpoints).unwrap();
    // Every non-goal start cell, checked against the shortest-path oracle.
    for y in 0..3 {
        for x in 0..3 {
            if (x, y) == (2, 2) {
                continue;
            }
            let start =
                crate::env::EnvState::with_cells(&spec, crate::env::Cell::new(x, y), crate::env::Cell::new(2, 2), 0)
                    .unwrap();
            let mut s = start;
            let mut steps = 0;
            while s.agent != s.goal && steps < 10 {
                let p = policy.probs_one(&crate::env::observe(&spec, &s)).unwrap();
                let a = (0..5).fold(0, |b, i| if p[i] > p[b] { i } else { b });
                s = crate::env::step(&spec, &s, Action::ALL[a]).unwrap().state;
                steps += 1;
            }
            assert_eq!(steps, x.abs_diff(2) + y.abs_diff(2), "start ({x},{y})");
        }
    }
}

#[test]
fn bc_single_sample_saturates() {
    let mut cfg = small_config(500);
    cfg.batch_size = 1;
    let p = bc_train_on(&[0.5, -1.0], &[3], 2, 5, &cfg, &mut no_checkpoints).unwrap();
    assert!(p.probs_one(&[0.5, -1.0]).unwrap()[3] > 0.99);
}

#[test]
fn bc_ignores_rewards() {
    let mk = |rewards: Vec<u8>| {
        let obs: Vec<f64> = (0..8).map(|i| i as f64 * 0.1).collect();
        let t = Trajectory::new(0, "x", 2, obs, vec![1, 2, 3], rewards).unwrap();
        Dataset::new(vec![t]).unwrap()
    };
    let a = bc_train(&mk(vec![0, 0, 1]), &[0], &small_config(50), no_checkpoints).unwrap();
    let b = bc_train(&mk(vec![1, 1, 0]), &[0], &small_config(50), no_checkpoints).unwrap();
    assert_eq!(a.params(), b.params());
    assert!(matches!(
        bc_train(&mk(vec![0; 3]), &[], &small_config(5), no_checkpoints),
        Err(Error::Usage(_))
    ));
}

#[test]
fn policy_head_is_a_distribution() {
    use rand::Rng as _;
    let mut rng = crate::seed::rng(1);
    let mut net = Mlp::new(&[4, 8, 5], Head::Softmax, 0).unwrap();
    for p in net.params_mut() {
        *p = rng.random_range(-5.0..5.0);
    }
    for _ in 0..200 {
        let x: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = net.probs_one(&x).unwrap();
        assert!(p.iter().all(|&v| v >= 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn transitions_follow_reward_table() {
    let spec = grid(3, 1);
    let ds = Dataset::new(generate_dataset(&spec, 5, &crate::data::default_policy_mix(), 2).unwrap()).unwrap();
    let ids = ds.ids();
    let rewards = ground_truth_rewards(&ds, &ids).unwrap();
    let t = Transitions::from_dataset(&ds, &ids, &rewards, EpisodeEnd::Terminal).unwrap();
    let total: usize = ids.iter().map(|&i| ds.get(i).unwrap().len()).sum();
    assert_eq!(t.len(), total);
    assert_eq!(t.terminal.iter().filter(|&&b| b).count(), ids.len());
    let first = ds.get(ids[0]).unwrap();
    assert_eq!(&t.obs[..t.obs_dim], first.observation(0));
    assert_eq!(&t.next_obs[..t.obs_dim], first.observation(1));
    let mut missing = rewards.clone();
    missing.remove(&ids[1]);
    let truncated = Transitions::from_dataset(&ds, &ids, &rewards, EpisodeEnd::Truncated).unwrap();
    assert!(truncated.terminal.iter().all(|&b| !b));
    assert_eq!(truncated.next_obs, t.next_obs);
    assert!(matches!(
        Transitions::from_dataset(&ds, &ids, &missing, EpisodeEnd::Terminal),
        Err(Error::Data(_))
    ));
}

#[test]
fn random_policy_sometimes_succeeds() {
    let spec = GridSpec::default();
    let n = Mlp::param_count(&[spec.obs_dim(), 4, 5]);
    let uniform = Mlp::from_parts(vec![spec.obs_dim(), 4, 5], Head::Softmax, vec![0.0; n]).unwrap();
    let r = evaluate_policy(&uniform, &spec, 500, 0, EvalMode::Sampled).unwrap();
    assert!(r.success_rate > 0.0 && r.success_rate < 1.0, "{r:?}");
    assert_eq!(r, evaluate_policy(&uniform, &spec, 500, 0, EvalMode::Sampled).unwrap());
}

#[test]
fn oracle_policy_always_succeeds() {
    for goal in [GoalPlacement::Random, GoalPlacement::Fixed { x: 6, y: 6 }] {
        let spec = GridSpec {
            goal,
            ..GridSpec::default()
        };
        let r = evaluate_policy(&TablePolicy::shortest_path(&spec), &spec, 200, 9, EvalMode::Greedy).unwrap();
        assert_eq!(r.success_rate, 1.0);
        assert!(r.mean_return >= 1.0 + spec.success_grace as f64);
    }
}

#[test]
fn evaluation_rejects_wrong_dimension() {
    let spec = GridSpec::default();
    let net = Mlp::new(&[3, 4, 5], Head::Softmax, 0).unwrap();
    assert!(matches!(
        evaluate_policy(&net, &spec, 1, 0, EvalMode::Greedy),
        Err(Error::Shape { .. })
    ));
}
