//! Brute-force checks of policy-order preservation on small MDPs.
//!
//! Every deterministic policy over the non-terminal states of an enumerable
//! environment is rolled out from the start state; its discounted return `v`
//! under environment rewards and `v_hat` under shaped rewards are compared
//! across all pairs of policies. A shaping preserves policy order when
//! `v1 <= v2` always implies `v_hat1 <= v_hat2`.
//!
//! Policies that produce the same trajectory have identical returns, so pairs
//! are checked between distinct `(v, v_hat)` outcomes weighted by how many
//! policies reach each.

use std::collections::BTreeMap;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agent::argmax;
use crate::approx::TabularQ;
use crate::env::TransitionTable;
use crate::replay::ReplayMemory;
use crate::shaping::{constant_sum, shape_episode, EpisodeShaper, ShapingConfig, ShapingError};

pub const DEFAULT_POLICY_CAP: u64 = 1 << 20;
/// Equality tolerance when comparing returns.
pub const TIE_TOLERANCE: f64 = 1e-12;
/// Tolerance for the exact shift `v_hat = v - p`.
pub const SHIFT_TOLERANCE: f64 = 1e-12;
/// Relative tolerance for the exact scaling `v_hat = z v`.
pub const SCALE_TOLERANCE: f64 = 1e-9;
const MAX_WITNESSES: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VerifyError {
    #[error("{required} policies exceed the enumeration cap of {cap}; raise the cap to at least {required}")]
    CapExceeded { required: u128, cap: u64 },
    #[error("policy has {got} entries, expected {expected}")]
    PolicyShape { expected: usize, got: usize },
    #[error(transparent)]
    Shaping(#[from] ShapingError),
}

/// Action per state. Entries for terminal states are ignored.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct PolicyTable(pub Vec<usize>);

/// Lexicographic enumeration of all policies over the decision states.
pub struct PolicyIter {
    decision: Vec<usize>,
    action_count: usize,
    current: Option<Vec<usize>>,
}

impl Iterator for PolicyIter {
    type Item = PolicyTable;

    fn next(&mut self) -> Option<PolicyTable> {
        let out = self.current.clone()?;
        // advance: last decision state is the least significant digit
        let cur = self.current.as_mut().expect("checked above");
        let mut carry = true;
        for &s in self.decision.iter().rev() {
            cur[s] += 1;
            if cur[s] < self.action_count {
                carry = false;
                break;
            }
            cur[s] = 0;
        }
        if carry {
            self.current = None;
        }
        Some(PolicyTable(out))
    }
}

/// Number of distinct policies: `actions ^ decision_states`.
pub fn policy_count(table: &TransitionTable) -> u128 {
    let n = table.decision_states().len() as u32;
    (table.spec.action_count as u128).checked_pow(n).unwrap_or(u128::MAX)
}

pub fn enumerate_policies(table: &TransitionTable, cap: u64) -> Result<PolicyIter, VerifyError> {
    let required = policy_count(table);
    if required > cap as u128 {
        return Err(VerifyError::CapExceeded { required, cap });
    }
    Ok(PolicyIter {
        decision: table.decision_states(),
        action_count: table.spec.action_count,
        current: Some(vec![0; table.spec.state_count]),
    })
}

/// A deterministic episode produced by rolling a policy through a table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolledEpisode {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
    pub next_states: Vec<usize>,
    pub terminals: Vec<bool>,
}

impl RolledEpisode {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Follows `policy` from the table's start state until a terminal transition
/// or the horizon cap.
pub fn rollout(table: &TransitionTable, policy: &PolicyTable) -> Result<RolledEpisode, VerifyError> {
    if policy.0.len() != table.spec.state_count {
        return Err(VerifyError::PolicyShape {
            expected: table.spec.state_count,
            got: policy.0.len(),
        });
    }
    let horizon = table.spec.max_episode_len;
    let mut ep = RolledEpisode {
        states: Vec::new(),
        actions: Vec::new(),
        rewards: Vec::new(),
        next_states: Vec::new(),
        terminals: Vec::new(),
    };
    let mut s = table.initial_state;
    loop {
        let a = policy.0[s];
        let row = table.row(s, a);
        let terminal = row.terminal || ep.len() + 1 >= horizon;
        ep.states.push(s);
        ep.actions.push(a);
        ep.rewards.push(row.reward);
        ep.next_states.push(row.next_state);
        ep.terminals.push(terminal);
        s = row.next_state;
        if terminal {
            return Ok(ep);
        }
    }
}

/// `sum_i gamma^i r_i`.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for r in rewards {
        total += discount * r;
        discount *= gamma;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyReturn {
    pub v: f64,
    pub v_hat: f64,
    pub episode: RolledEpisode,
}

pub fn policy_return(
    table: &TransitionTable,
    policy: &PolicyTable,
    gamma: f64,
    shaper: &dyn EpisodeShaper,
) -> Result<PolicyReturn, VerifyError> {
    let episode = rollout(table, policy)?;
    let shaped = shaper.shape(&episode.rewards, &episode.terminals)?;
    Ok(PolicyReturn {
        v: discounted_return(&episode.rewards, gamma),
        v_hat: discounted_return(&shaped, gamma),
        episode,
    })
}

/// n-step TD targets along an episode, bootstrapping from `q`:
/// `sum_{i<n} gamma^i r_{t+i} + gamma^n max_a q(s_{t+n}, a)`, with the
/// bootstrap dropped once the window reaches the terminal transition.
pub fn n_step_targets(episode: &RolledEpisode, q: &TabularQ, gamma: f64, n: usize) -> Vec<f64> {
    let len = episode.len();
    (0..len)
        .map(|t| {
            let k = n.min(len - t);
            let mut target = 0.0;
            let mut discount = 1.0;
            for i in 0..k {
                target += discount * episode.rewards[t + i];
                discount *= gamma;
            }
            if t + k < len || !episode.terminals[len - 1] {
                let s = episode.next_states[t + k - 1];
                let best = q
                    .q_values(s)
                    .expect("state in table")
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                target += discount * best;
            }
            target
        })
        .collect()
}

/// The closed-form relation between `v_hat` and `v` a shaping is expected to obey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectedTransform {
    /// `v_hat = v + offset`.
    Shift { offset: f64 },
    /// `v_hat = factor * v`.
    Scale { factor: f64 },
}

impl ExpectedTransform {
    pub fn apply(&self, v: f64) -> f64 {
        match *self {
            ExpectedTransform::Shift { offset } => v + offset,
            ExpectedTransform::Scale { factor } => factor * v,
        }
    }

    pub fn for_config(cfg: &ShapingConfig) -> Option<Self> {
        match (cfg.sp_enabled, cfg.rb_enabled) {
            (false, false) => Some(ExpectedTransform::Shift { offset: 0.0 }),
            (true, false) => Some(ExpectedTransform::Shift { offset: -cfg.p }),
            (false, true) => Some(ExpectedTransform::Scale {
                factor: constant_sum(cfg.lambda, cfg.l_min),
            }),
            (true, true) => None,
        }
    }
}

/// Policies sharing one `(v, v_hat)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeGroup {
    pub v: f64,
    pub v_hat: f64,
    pub policies: u64,
    pub episode_len: usize,
    /// First policy (in enumeration order) with this outcome.
    pub witness: PolicyTable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Inversion {
    /// Policy with the lower (or equal) `v`.
    pub lower: PolicyTable,
    pub higher: PolicyTable,
    pub v: (f64, f64),
    pub v_hat: (f64, f64),
}

/// Which guarantee, if any, the configuration falls under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Claim {
    /// `v_hat = v - p` and order preservation must hold exactly.
    ExactShift,
    /// `v_hat = z v` and order preservation must hold exactly.
    ExactScale,
    /// Order preservation is asserted (arbitrary shaping at gamma = 1).
    OrderPreserved,
    /// Outside the proven regime; deviations are quantified only.
    ReportOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PirfReport {
    pub env: String,
    pub shaping: String,
    pub shaping_config: Option<ShapingConfig>,
    pub gamma: f64,
    /// Horizon-capped episodes end in a terminal transition like natural ones.
    pub horizon: usize,
    pub policy_count: u64,
    /// Unordered pairs of policies compared.
    pub pairs_checked: u128,
    /// Number of inverted pairs.
    pub inversion_count: u128,
    /// Up to 16 witnesses.
    pub inversions: Vec<Inversion>,
    pub expected: Option<ExpectedTransform>,
    /// Max over policies of `|v_hat - expected(v)|`.
    pub max_shift_deviation: Option<f64>,
    /// Same, divided by `max(|expected(v)|, 1)`.
    pub max_relative_deviation: Option<f64>,
    /// Every policy maximizing `v_hat` also maximizes `v`.
    pub argmax_consistent: bool,
    /// Smallest number of steps from one nonzero environment reward (or the
    /// episode start) to the next, over all policies.
    pub min_lead_gap: Option<usize>,
    pub claim: Claim,
    /// Failed assertions; empty unless `claim` is asserted and broken.
    pub violations: Vec<String>,
    pub outcomes: Vec<OutcomeGroup>,
}

impl PirfReport {
    pub fn order_preserved(&self) -> bool {
        self.inversion_count == 0
    }

    /// An asserted claim failed.
    pub fn failed(&self) -> bool {
        !self.violations.is_empty()
    }

    /// Deviations worth a warning under a report-only claim.
    pub fn warnings(&self) -> Vec<String> {
        if self.claim != Claim::ReportOnly {
            return Vec::new();
        }
        let mut w = Vec::new();
        if self.inversion_count > 0 {
            w.push(format!(
                "{} inverted policy pairs outside the proven regime (gamma = {})",
                self.inversion_count, self.gamma
            ));
        }
        if let Some(d) = self.max_shift_deviation {
            if d > SHIFT_TOLERANCE {
                w.push(format!("max deviation from the closed form: {d:e}"));
            }
        }
        w
    }

    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "env: {}", self.env);
        let _ = writeln!(s, "shaping: {}", self.shaping);
        let _ = writeln!(s, "gamma: {}", self.gamma);
        let _ = writeln!(s, "horizon: {} (horizon cap counts as terminal)", self.horizon);
        let _ = writeln!(s, "policies: {}", self.policy_count);
        let _ = writeln!(s, "distinct outcomes: {}", self.outcomes.len());
        let _ = writeln!(s, "pairs checked: {}", self.pairs_checked);
        let _ = writeln!(s, "{} inversions", self.inversion_count);
        if let Some(d) = self.max_shift_deviation {
            let _ = writeln!(
                s,
                "max deviation from {:?}: {d:e}",
                self.expected.expect("set with deviation")
            );
        }
        let _ = writeln!(s, "argmax consistent: {}", self.argmax_consistent);
        if let Some(g) = self.min_lead_gap {
            let _ = writeln!(s, "min reward gap: {g}");
        }
        let _ = writeln!(s, "claim: {:?}", self.claim);
        for inv in &self.inversions {
            let _ = writeln!(
                s,
                "inversion: {:?} (v={}, v_hat={}) vs {:?} (v={}, v_hat={})",
                inv.lower.0, inv.v.0, inv.v_hat.0, inv.higher.0, inv.v.1, inv.v_hat.1
            );
        }
        for v in &self.violations {
            let _ = writeln!(s, "VIOLATION: {v}");
        }
        for w in self.warnings() {
            let _ = writeln!(s, "WARNING: {w}");
        }
        s
    }
}

/// Whether the pair `(a, b)` breaks order preservation.
fn inverted(a: (f64, f64), b: (f64, f64)) -> bool {
    let ((va, ha), (vb, hb)) = (a, b);
    if (va - vb).abs() <= TIE_TOLERANCE {
        (ha - hb).abs() > TIE_TOLERANCE
    } else if va < vb {
        ha > hb + TIE_TOLERANCE
    } else {
        hb > ha + TIE_TOLERANCE
    }
}

fn lead_gap(rewards: &[f64]) -> Option<usize> {
    let mut prev: isize = -1;
    let mut best: Option<usize> = None;
    for (i, r) in rewards.iter().enumerate() {
        if *r != 0.0 {
            let gap = (i as isize - prev) as usize;
            best = Some(best.map_or(gap, |b| b.min(gap)));
            prev = i as isize;
        }
    }
    best
}

/// Exhaustive order-preservation check of `shaper` on `table`.
///
/// `config` describes the shaper when it is an SP/RB configuration; pass
/// `None` for other shapers. It selects the closed form used for
/// `max_shift_deviation` and which claim is asserted.
pub fn check_pirf(
    table: &TransitionTable,
    shaper: &dyn EpisodeShaper,
    config: Option<&ShapingConfig>,
    gamma: f64,
    cap: u64,
) -> Result<PirfReport, VerifyError> {
    let policies = enumerate_policies(table, cap)?;
    let mut groups: BTreeMap<(u64, u64), OutcomeGroup> = BTreeMap::new();
    let mut policy_total = 0u64;
    let mut min_gap: Option<usize> = None;
    for policy in policies {
        let ret = policy_return(table, &policy, gamma, shaper)?;
        policy_total += 1;
        if let Some(g) = lead_gap(&ret.episode.rewards) {
            min_gap = Some(min_gap.map_or(g, |m| m.min(g)));
        }
        groups
            .entry((ret.v.to_bits(), ret.v_hat.to_bits()))
            .and_modify(|g| g.policies += 1)
            .or_insert_with(|| OutcomeGroup {
                v: ret.v,
                v_hat: ret.v_hat,
                policies: 1,
                episode_len: ret.episode.len(),
                witness: policy.clone(),
            });
    }
    let mut outcomes: Vec<OutcomeGroup> = groups.into_values().collect();
    outcomes.sort_by(|a, b| a.v.total_cmp(&b.v).then(a.v_hat.total_cmp(&b.v_hat)));

    let mut inversion_count = 0u128;
    let mut inversions = Vec::new();
    for (i, a) in outcomes.iter().enumerate() {
        for b in &outcomes[i + 1..] {
            if inverted((a.v, a.v_hat), (b.v, b.v_hat)) {
                inversion_count += a.policies as u128 * b.policies as u128;
                if inversions.len() < MAX_WITNESSES {
                    inversions.push(Inversion {
                        lower: a.witness.clone(),
                        higher: b.witness.clone(),
                        v: (a.v, b.v),
                        v_hat: (a.v_hat, b.v_hat),
                    });
                }
            }
        }
    }
    let n = policy_total as u128;
    let pairs_checked = n * n.saturating_sub(1) / 2;

    let expected = config.and_then(ExpectedTransform::for_config);
    let (max_dev, max_rel) = match expected {
        Some(t) => {
            let mut abs: f64 = 0.0;
            let mut rel: f64 = 0.0;
            for o in &outcomes {
                let e = t.apply(o.v);
                let d = (o.v_hat - e).abs();
                abs = abs.max(d);
                rel = rel.max(d / e.abs().max(1.0));
            }
            (Some(abs), Some(rel))
        }
        None => (None, None),
    };

    let v_max = outcomes.iter().map(|o| o.v).fold(f64::NEG_INFINITY, f64::max);
    let h_max = outcomes.iter().map(|o| o.v_hat).fold(f64::NEG_INFINITY, f64::max);
    let argmax_consistent = outcomes
        .iter()
        .filter(|o| o.v_hat >= h_max - TIE_TOLERANCE)
        .all(|o| o.v >= v_max - TIE_TOLERANCE);

    let exact_gamma = gamma == 1.0;
    let claim = match config {
        Some(c) if exact_gamma && !c.rb_enabled => Claim::ExactShift,
        Some(c) if exact_gamma && !c.sp_enabled && min_gap.is_none_or(|g| g > c.l_min) => Claim::ExactScale,
        None if exact_gamma => Claim::OrderPreserved,
        _ => Claim::ReportOnly,
    };

    let mut violations = Vec::new();
    if claim != Claim::ReportOnly && inversion_count > 0 {
        violations.push(format!("{inversion_count} inverted policy pairs"));
    }
    match (claim, max_dev, max_rel) {
        (Claim::ExactShift, Some(d), _) if d > SHIFT_TOLERANCE => {
            violations.push(format!("v_hat deviates from v - p by {d:e}"));
        }
        (Claim::ExactScale, _, Some(r)) if r > SCALE_TOLERANCE => {
            violations.push(format!("v_hat deviates from z v by {r:e} (relative)"));
        }
        _ => {}
    }

    Ok(PirfReport {
        env: table.name.clone(),
        shaping: shaper.label(),
        shaping_config: config.copied(),
        gamma,
        horizon: table.spec.max_episode_len,
        policy_count: policy_total,
        pairs_checked,
        inversion_count,
        inversions,
        expected,
        max_shift_deviation: max_dev,
        max_relative_deviation: max_rel,
        argmax_consistent,
        min_lead_gap: min_gap,
        claim,
        violations,
        outcomes,
    })
}

/// Bellman optimality iteration until the max-norm change drops below `tol`.
/// Terminal transitions contribute their reward only.
pub fn value_iteration(table: &TransitionTable, gamma: f64, tol: f64) -> TabularQ {
    const MAX_SWEEPS: usize = 1_000_000;
    let spec = table.spec;
    let mut q = TabularQ::new(spec.state_count, spec.action_count);
    let mut next = q.clone();
    for _ in 0..MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for row in table.rows() {
            let value = if row.terminal {
                row.reward
            } else {
                let best = q
                    .q_values(row.next_state)
                    .expect("table states in range")
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
                row.reward + gamma * best
            };
            delta = delta.max((value - q.get(row.state, row.action)).abs());
            next.set(row.state, row.action, value);
        }
        std::mem::swap(&mut q, &mut next);
        if delta < tol {
            break;
        }
    }
    q
}

/// Greedy policy of a Q table, lowest action index on ties.
pub fn greedy_policy(q: &TabularQ) -> PolicyTable {
    PolicyTable(
        (0..q.state_count())
            .map(|s| argmax(q.q_values(s).expect("in range")))
            .collect(),
    )
}

/// Highest `v` over all policies, with a maximizing witness.
pub fn best_policy_value(table: &TransitionTable, gamma: f64, cap: u64) -> Result<(f64, PolicyTable), VerifyError> {
    let identity = ShapingConfig::none();
    let mut best: Option<(f64, PolicyTable)> = None;
    for policy in enumerate_policies(table, cap)? {
        let v = policy_return(table, &policy, gamma, &identity)?.v;
        if best.as_ref().is_none_or(|(b, _)| v > *b) {
            best = Some((v, policy));
        }
    }
    Ok(best.expect("at least one policy"))
}

/// Pushes episodes (environment rewards, terminal at the end) through a replay
/// memory and compares every committed transition's shaped reward with
/// [`shape_episode`] at the same position. Also draws `extra_samples` random
/// minibatch items through [`ReplayMemory::sample`]. Returns the largest
/// absolute deviation.
pub fn check_replay_equivalence<R: Rng + ?Sized>(
    episodes: &[Vec<f64>],
    shaping: &ShapingConfig,
    rng: &mut R,
    extra_samples: usize,
) -> Result<f64, VerifyError> {
    use crate::env::Observation;

    let total: usize = episodes.iter().map(Vec::len).sum();
    let mut memory = ReplayMemory::new(total.max(1), *shaping).expect("valid config");
    let mut expected = Vec::with_capacity(total);
    let mut position = 0usize;
    for ep in episodes {
        let mut terminals = vec![false; ep.len()];
        if let Some(t) = terminals.last_mut() {
            *t = true;
        }
        expected.extend(shape_episode(ep, &terminals, shaping)?);
        for (i, &r) in ep.iter().enumerate() {
            let obs = |id| Observation {
                id,
                features: Vec::new(),
            };
            memory.push(obs(position), 0, r, obs(position + 1), terminals[i]);
            position += 1;
        }
    }
    let mut worst: f64 = 0.0;
    let mut seen = 0usize;
    for s in memory.iter() {
        worst = worst.max((s.shaped_reward - expected[s.transition.state.id]).abs());
        seen += 1;
    }
    if seen != total {
        return Ok(f64::INFINITY);
    }
    if extra_samples > 0 && total > 0 {
        for s in memory.sample(extra_samples, rng).expect("memory is full") {
            worst = worst.max((s.shaped_reward - expected[s.transition.state.id]).abs());
        }
    }
    Ok(worst)
}

/// `r -> r^2 + offset` on every step. Not order preserving in general; used
/// to show the checker detects inversions.
#[derive(Debug, Clone, Copy)]
pub struct SquarePlus {
    pub offset: f64,
}

impl EpisodeShaper for SquarePlus {
    fn label(&self) -> String {
        format!("square_plus_{}", self.offset)
    }

    fn shape(&self, rewards: &[f64], _terminals: &[bool]) -> Result<Vec<f64>, ShapingError> {
        Ok(rewards.iter().map(|r| r * r + self.offset).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{enumerate_transitions, Dynamics, GridCliff, SparseChain, TableEnv};
    use crate::rng::seeded;

    fn table(d: &dyn Dynamics) -> TransitionTable {
        enumerate_transitions(d).unwrap()
    }

    #[test]
    fn policy_counts() {
        // 3 decision states, 2 actions
        let t = table(&SparseChain::new(4, &[3], 8).unwrap());
        let all: Vec<_> = enumerate_policies(&t, DEFAULT_POLICY_CAP).unwrap().collect();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].0, vec![0, 0, 0, 0]);
        assert_eq!(all[1].0, vec![0, 0, 1, 0]);
        assert_eq!(all[7].0, vec![1, 1, 1, 0]);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, all);

        let one_state = TableEnv::new(
            "one",
            2,
            4,
            0,
            &[1],
            &(0..4)
                .map(|a| crate::env::TransitionRow {
                    state: 0,
                    action: a,
                    next_state: 1,
                    reward: a as f64,
                    terminal: true,
                })
                .collect::<Vec<_>>(),
            3,
        )
        .unwrap();
        assert_eq!(enumerate_policies(&table(&one_state), 100).unwrap().count(), 4);

        let t = table(&SparseChain::new(9, &[8], 12).unwrap());
        assert_eq!(enumerate_policies(&t, DEFAULT_POLICY_CAP).unwrap().count(), 256);
    }

    #[test]
    fn cap_refusal_names_requirement() {
        let t = table(&SparseChain::new(9, &[8], 12).unwrap());
        match enumerate_policies(&t, 100) {
            Err(VerifyError::CapExceeded { required, cap }) => {
                assert_eq!(required, 256);
                assert_eq!(cap, 100);
            }
            _ => panic!("expected refusal"),
        }
    }

    #[test]
    fn optimal_chain_return() {
        let t = table(&SparseChain::new(3, &[2], 8).unwrap());
        let right = PolicyTable(vec![1, 1, 0]);
        let r = policy_return(&t, &right, 1.0, &ShapingConfig::none()).unwrap();
        assert_eq!((r.v, r.v_hat), (1.0, 1.0));
        let r = policy_return(&t, &right, 1.0, &ShapingConfig::sp(1.0)).unwrap();
        assert_eq!(r.v_hat, r.v - 1.0);
    }

    #[test]
    fn discounted_punishment_depends_on_length() {
        let t = table(&TableEnv::discount_trap(0.0));
        let short = policy_return(&t, &PolicyTable(vec![0; 8]), 0.9, &ShapingConfig::sp(1.0)).unwrap();
        let long = policy_return(&t, &PolicyTable(vec![1; 8]), 0.9, &ShapingConfig::sp(1.0)).unwrap();
        assert_eq!(short.episode.len(), 3);
        assert_eq!(long.episode.len(), 4);
        assert!((short.v - short.v_hat - 0.81).abs() < 1e-12);
        assert!((long.v - long.v_hat - 0.729).abs() < 1e-12);
    }

    #[test]
    fn horizon_cap_ends_rollout() {
        let t = table(&SparseChain::new(5, &[4], 6).unwrap());
        let ep = rollout(&t, &PolicyTable(vec![0; 5])).unwrap();
        assert_eq!(ep.len(), 6);
        assert_eq!(ep.terminals.iter().filter(|t| **t).count(), 1);
        assert!(ep.terminals[5]);
    }

    #[test]
    fn value_iteration_chain() {
        // 0 -> 1 -> goal
        let t = table(&SparseChain::new(3, &[2], 10).unwrap());
        let q = value_iteration(&t, 0.9, 1e-12);
        assert!((q.get(1, 1) - 1.0).abs() < 1e-12);
        assert!((q.get(0, 1) - 0.9).abs() < 1e-12);
        assert!((q.get(1, 0) - 0.81).abs() < 1e-12);
    }

    #[test]
    fn myopic_value_iteration_is_reward() {
        let t = table(&GridCliff::new(4, 3, 20).unwrap());
        let q = value_iteration(&t, 0.0, 1e-12);
        for row in t.rows() {
            assert_eq!(q.get(row.state, row.action), row.reward);
        }
    }

    #[test]
    fn greedy_from_q_star_attains_enumeration_max() {
        for d in [
            Box::new(SparseChain::new(5, &[2, 4], 12).unwrap()) as Box<dyn Dynamics>,
            Box::new(GridCliff::new(3, 3, 12).unwrap()),
            Box::new(TableEnv::mixed_rewards()),
            Box::new(TableEnv::discount_trap(0.5)),
        ] {
            let t = table(d.as_ref());
            let q = value_iteration(&t, 0.9, 1e-12);
            let greedy = greedy_policy(&q);
            let v = policy_return(&t, &greedy, 0.9, &ShapingConfig::none()).unwrap().v;
            let (best, _) = best_policy_value(&t, 0.9, DEFAULT_POLICY_CAP).unwrap();
            assert!((v - best).abs() < 1e-12, "{}: {v} vs {best}", t.name);
        }
    }

    #[test]
    fn n_step_targets_reproduce_q_star_on_optimal_path() {
        let t = table(&GridCliff::new(4, 3, 20).unwrap());
        let q = value_iteration(&t, 0.9, 1e-13);
        let ep = rollout(&t, &greedy_policy(&q)).unwrap();
        for n in 1..=7 {
            let targets = n_step_targets(&ep, &q, 0.9, n);
            for (i, target) in targets.iter().enumerate() {
                let expect = q.get(ep.states[i], ep.actions[i]);
                assert!((target - expect).abs() < 1e-10, "n={n} t={i}");
            }
        }
        // terminal step: target is the reward itself
        let last = ep.len() - 1;
        assert_eq!(n_step_targets(&ep, &q, 0.9, 1)[last], ep.rewards[last]);
    }

    #[test]
    fn sp_at_gamma_one_is_an_exact_shift() {
        let t = table(&SparseChain::new(6, &[2, 5], 8).unwrap());
        let cfg = ShapingConfig::sp(10.0);
        let rep = check_pirf(&t, &cfg, Some(&cfg), 1.0, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(rep.claim, Claim::ExactShift);
        assert_eq!(rep.inversion_count, 0);
        assert!(rep.max_shift_deviation.unwrap() <= 1e-12);
        assert!(rep.argmax_consistent);
        assert!(!rep.failed());
        assert_eq!(rep.policy_count, 32);
        assert_eq!(rep.pairs_checked, 32 * 31 / 2);
    }

    #[test]
    fn discount_trap_reports_inversion() {
        let t = table(&TableEnv::discount_trap(0.5));
        let cfg = ShapingConfig::sp(10.0);
        let rep = check_pirf(&t, &cfg, Some(&cfg), 0.9, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(rep.claim, Claim::ReportOnly);
        assert!(rep.inversion_count >= 1);
        assert!(!rep.failed());
        assert!(!rep.warnings().is_empty());
        assert!(!rep.argmax_consistent);
    }

    #[test]
    fn square_plus_is_caught() {
        let t = table(&TableEnv::mixed_rewards());
        let rep = check_pirf(&t, &SquarePlus { offset: -2.5 }, None, 1.0, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(rep.claim, Claim::OrderPreserved);
        assert!(rep.inversion_count >= 1);
        assert!(rep.failed());
        assert!(rep.to_text().contains("inversion:"));
    }

    #[test]
    fn block_rewards_scale_exactly() {
        let t = table(&TableEnv::block_rewards(3, 4).unwrap());
        let cfg = ShapingConfig::rb(0.65, 3);
        let rep = check_pirf(&t, &cfg, Some(&cfg), 1.0, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(rep.claim, Claim::ExactScale);
        assert_eq!(rep.min_lead_gap, Some(4));
        assert_eq!(rep.inversion_count, 0);
        assert!(rep.max_relative_deviation.unwrap() <= 1e-9);
    }

    #[test]
    fn rb_outside_hypothesis_is_report_only() {
        let t = table(&TableEnv::block_rewards(3, 4).unwrap());
        let cfg = ShapingConfig::rb(0.65, 10);
        let rep = check_pirf(&t, &cfg, Some(&cfg), 1.0, DEFAULT_POLICY_CAP).unwrap();
        assert_eq!(rep.claim, Claim::ReportOnly);
        assert!(!rep.failed());
    }

    #[test]
    fn replay_equivalence_on_random_episodes() {
        let mut rng = seeded(8);
        let episodes: Vec<Vec<f64>> = (0..100)
            .map(|_| {
                let n = rng.gen_range(1..60);
                (0..n)
                    .map(|_| {
                        if rng.gen_bool(0.1) {
                            rng.gen_range(1..4) as f64
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        for cfg in [
            ShapingConfig::none(),
            ShapingConfig::hybrid(1.0, 0.65, 25),
            ShapingConfig::rb(0.9, 5),
        ] {
            let dev = check_replay_equivalence(&episodes, &cfg, &mut rng, 1000).unwrap();
            assert_eq!(dev, 0.0, "{}", cfg.label());
        }
    }
}
