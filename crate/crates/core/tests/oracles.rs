//! Cross-checks against independently written reference implementations.

use proptest::prelude::*;
use rand::Rng;
use sprb_core::agent::{td_targets, Variant};
use sprb_core::approx::TabularQ;
use sprb_core::env::{enumerate_transitions, DelayedCatch, Env, GridCliff, Observation, TableEnv, TransitionRow};
use sprb_core::replay::ReplayMemory;
use sprb_core::rng::seeded;
use sprb_core::shaping::{shape_episode, ShapingConfig};
use sprb_core::verify::{check_pirf, discounted_return, Claim, DEFAULT_POLICY_CAP};
use sprb_core::QApproximator;

/// Forward search per index: weight of the nearest nonzero reward at or after `i`.
fn naive_shape(rewards: &[f64], cfg: &ShapingConfig) -> Vec<f64> {
    let n = rewards.len();
    let punished: Vec<f64> = rewards
        .iter()
        .enumerate()
        .map(|(i, &r)| if cfg.sp_enabled && i + 1 == n { r - cfg.p } else { r })
        .collect();
    if !cfg.rb_enabled {
        return punished;
    }
    (0..n)
        .map(|i| match (i..n).find(|&j| punished[j] != 0.0) {
            Some(j) if j - i <= cfg.l_min => {
                let mut w = 1.0;
                for _ in 0..j - i {
                    w *= cfg.lambda;
                }
                w * punished[j]
            }
            _ => 0.0,
        })
        .collect()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(1.0))
}

fn rollouts(env: &mut Env, episodes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded(seed);
    let actions = env.spec().action_count;
    (0..episodes)
        .map(|_| {
            env.reset(rng.gen());
            let mut rewards = Vec::new();
            loop {
                let s = env.step(rng.gen_range(0..actions)).unwrap();
                rewards.push(s.reward);
                if s.terminal {
                    return rewards;
                }
            }
        })
        .collect()
}

#[test]
fn replay_matches_offline_shaping_on_env_rollouts() {
    let cfg = ShapingConfig::hybrid(1.0, 0.65, 49);
    let mut envs = [
        Env::new(DelayedCatch::new(5, 6, 300).unwrap()),
        Env::new(GridCliff::new(5, 4, 60).unwrap()),
    ];
    for env in &mut envs {
        let episodes = rollouts(env, 200, 1);
        let mut mem = ReplayMemory::new(1_000_000, cfg).unwrap();
        let mut expected = Vec::new();
        let mut id = 0;
        for ep in &episodes {
            let mut terminals = vec![false; ep.len()];
            *terminals.last_mut().unwrap() = true;
            let offline = shape_episode(ep, &terminals, &cfg).unwrap();
            assert!(close(&offline, &naive_shape(ep, &cfg)));
            expected.extend(offline);
            for (i, &r) in ep.iter().enumerate() {
                let o = |k| Observation {
                    id: k,
                    features: vec![],
                };
                mem.push(o(id), 0, r, o(id + 1), terminals[i]);
                id += 1;
            }
        }
        assert_eq!(mem.pending_len(), 0);
        for s in mem.iter() {
            assert_eq!(s.shaped_reward, expected[s.transition.state.id]);
        }
    }
}

#[test]
fn td_targets_match_hand_formula() {
    // two states, two actions; transition 0 -> 1 non-terminal, reward 0.5
    let online = QApproximator::Tabular(TabularQ::from_values(2, 2, vec![0.0, 0.0, 1.0, 3.0]).unwrap());
    let target = QApproximator::Tabular(TabularQ::from_values(2, 2, vec![0.0, 0.0, 2.0, -1.0]).unwrap());
    let mut mem = ReplayMemory::new(4, ShapingConfig::none()).unwrap();
    let o = |id| Observation { id, features: vec![] };
    mem.push(o(0), 0, 0.5, o(1), false);
    mem.push(o(1), 1, 0.0, o(0), true);
    let batch: Vec<_> = mem.iter().collect();
    let gamma = 0.9;
    let dqn = td_targets(Variant::Dqn, &batch, &online, &target, gamma).unwrap();
    assert_eq!(dqn, vec![0.5 + gamma * 2.0, 0.0]);
    let double = td_targets(Variant::DoubleDqn, &batch, &online, &target, gamma).unwrap();
    // online picks action 1, target values it at -1
    assert_eq!(double, vec![0.5 - gamma, 0.0]);
}

fn random_table(states: usize, rows: Vec<(usize, f64, bool)>, horizon: usize) -> TableEnv {
    let terminal = states - 1;
    let rows: Vec<TransitionRow> = rows
        .into_iter()
        .enumerate()
        .take((states - 1) * 2)
        .map(|(k, (next, reward, _))| {
            let next = next % states;
            TransitionRow {
                state: k / 2,
                action: k % 2,
                next_state: next,
                reward,
                terminal: next == terminal,
            }
        })
        .collect();
    TableEnv::new("random", states, 2, 0, &[terminal], &rows, horizon).unwrap()
}

fn table_strategy() -> impl Strategy<Value = TableEnv> {
    (3usize..7, 2usize..7).prop_flat_map(|(states, horizon)| {
        prop::collection::vec(
            (
                0..states,
                prop_oneof![3 => Just(0.0), 1 => (0i32..4).prop_map(f64::from)],
                any::<bool>(),
            ),
            (states - 1) * 2,
        )
        .prop_map(move |rows| random_table(states, rows, horizon))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn shaping_matches_naive_reference(
        rewards in prop::collection::vec(prop_oneof![5 => Just(0.0), 1 => (-4i32..=4).prop_map(f64::from)], 1..80),
        p in 0.5f64..20.0,
        lambda in 0.0f64..0.99,
        l_min in 0usize..30,
        sp in any::<bool>(),
        rb in any::<bool>(),
    ) {
        let cfg = ShapingConfig { sp_enabled: sp, p, rb_enabled: rb, lambda, l_min };
        let mut terminals = vec![false; rewards.len()];
        *terminals.last_mut().unwrap() = true;
        let fast = shape_episode(&rewards, &terminals, &cfg).unwrap();
        prop_assert!(close(&fast, &naive_shape(&rewards, &cfg)));
    }

    #[test]
    fn sp_at_gamma_one_never_inverts(env in table_strategy(), p in 0.1f64..200.0) {
        let table = enumerate_transitions(&env).unwrap();
        let cfg = ShapingConfig::sp(p);
        let rep = check_pirf(&table, &cfg, Some(&cfg), 1.0, DEFAULT_POLICY_CAP).unwrap();
        prop_assert_eq!(rep.claim, Claim::ExactShift);
        prop_assert_eq!(rep.inversion_count, 0);
        prop_assert!(rep.max_shift_deviation.unwrap() <= 1e-12 * p.max(1.0));
    }

    #[test]
    fn discounted_return_is_horner(rewards in prop::collection::vec(-5.0f64..5.0, 0..40), gamma in 0.0f64..=1.0) {
        let horner = rewards.iter().rev().fold(0.0, |acc, r| r + gamma * acc);
        prop_assert!((discounted_return(&rewards, gamma) - horner).abs() <= 1e-9);
    }
}
