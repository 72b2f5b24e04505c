use treepar_core::env::{BanditConfig, BanditState, BanditTree, CountingGame, EnvChoice, Environment, Gomoku};

/// Mean and max deterministic payout over every continuation of `s`.
fn enumerate(env: &BanditTree, s: &BanditState) -> (f64, f64, u64) {
    if env.is_terminal(s) {
        let v = env.payout(s);
        return (v, v, 1);
    }
    let (mut sum, mut max, mut count) = (0.0, f64::MIN, 0);
    for a in 0..env.spec().action_count {
        let (m, x, c) = enumerate(env, &env.step(s, a).unwrap());
        sum += m * c as f64;
        max = max.max(x);
        count += c;
    }
    (sum / count as f64, max, count)
}

#[test]
fn bandit_optimal_arm_by_full_enumeration() {
    let env = BanditTree::new(BanditConfig::default());
    let root = env.reset(0);
    let arms: Vec<(f64, f64, u64)> = (0..6).map(|a| enumerate(&env, &env.step(&root, a).unwrap())).collect();
    assert!(arms.iter().all(|a| a.2 == 6u64.pow(8)));
    let best_mean = (0..6).max_by(|&i, &j| arms[i].0.total_cmp(&arms[j].0)).unwrap();
    let best_max = (0..6).max_by(|&i, &j| arms[i].1.total_cmp(&arms[j].1)).unwrap();
    assert_eq!(best_mean, 3);
    assert_eq!(best_max, 3);
    for (a, arm) in arms.iter().enumerate() {
        if a != 3 {
            assert!(arms[3].0 - arm.0 > 0.1, "arm {a}: {arm:?} vs {:?}", arms[3]);
        }
    }
}

#[test]
fn bandit_rollout_mean_tracks_enumerated_mean() {
    let env = BanditTree::new(BanditConfig { horizon: 4, ..BanditConfig::default() });
    let s = env.step(&env.reset(0), 1).unwrap();
    let (exact, _, _) = enumerate(&env, &s);
    let n = 20_000;
    let mean = (0..n).map(|k| env.rollout(&s, k)).sum::<f64>() / n as f64;
    assert!((mean - exact).abs() < 0.01, "{mean} vs {exact}");
}

#[test]
fn counting_pays_only_on_all_ones() {
    let g = CountingGame::new(5);
    for path in 0u32..32 {
        let mut s = g.reset(0);
        for bit in 0..5 {
            s = g.step(&s, ((path >> bit) & 1) as usize).unwrap();
        }
        assert!(g.is_terminal(&s));
        let want = if path == 31 { 1.0 } else { 0.0 };
        assert_eq!(g.rollout(&s, path as u64), want);
    }
}

#[test]
fn gomoku_rollouts_end_in_a_result() {
    let g = Gomoku::new();
    let s = g.reset(0);
    let mut tally = [0usize; 3];
    for seed in 0..300 {
        let v = g.rollout(&s, seed);
        assert!(v == -1.0 || v == 0.0 || v == 1.0, "{v}");
        tally[(v + 1.0) as usize] += 1;
    }
    assert!(tally[0] > 0 && tally[2] > 0, "{tally:?}");
    assert_eq!(g.spec().state_bytes, 432);
    assert_eq!(g.spec().action_count, 36);
}

#[test]
fn env_choice_builds_every_environment() {
    for name in ["counting", "bandit", "gomoku"] {
        let c = EnvChoice::by_name(name).unwrap();
        assert_eq!(c.name(), name);
        let env = c.build(100);
        let s = env.initial_state(0);
        assert_eq!(s.len(), env.spec().state_bytes);
        assert_eq!(env.rollout_bytes(&s, 7).unwrap(), c.build(0).rollout_bytes(&s, 7).unwrap());
    }
    assert!(EnvChoice::by_name("pong").is_err());
}
