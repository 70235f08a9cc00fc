//! Epsilon-greedy Q-learning with replay memory and a target network.
//!
//! Randomness is drawn from one seeded stream in a fixed order: online network
//! initialization, then per episode one `u64` for the environment reset, then
//! per step the exploration draws, and per learning step the minibatch indices.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::approx::{ApproxError, ApproxKind, MlpQ, Optimizer, QApproximator, RmspropState, TabularQ, UpdateSample};
use crate::env::{Env, EnvError, EnvSpec, Observation};
use crate::replay::{ReplayError, ReplayMemory, Sampled};
use crate::rng::{seeded, StdRng};
use crate::shaping::{shape_episode, ShapingConfig, ShapingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Dqn,
    DoubleDqn,
    DuelingDoubleDqn,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Dqn => "dqn",
            Variant::DoubleDqn => "double_dqn",
            Variant::DuelingDoubleDqn => "dueling_double_dqn",
        }
    }

    pub fn is_dueling(self) -> bool {
        self == Variant::DuelingDoubleDqn
    }
}

/// Linear epsilon decay: `start` during warmup, then linear to `end` over
/// `decay_steps` environment steps, then `end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
    #[serde(default)]
    pub warmup: u64,
}

impl EpsilonSchedule {
    pub fn constant(epsilon: f64) -> Self {
        Self {
            start: epsilon,
            end: epsilon,
            decay_steps: 1,
            warmup: 0,
        }
    }
}

pub fn epsilon_at(schedule: &EpsilonSchedule, global_step: u64) -> f64 {
    if global_step < schedule.warmup {
        return schedule.start;
    }
    let progress = (global_step - schedule.warmup) as f64 / schedule.decay_steps as f64;
    if progress >= 1.0 {
        return schedule.end;
    }
    schedule.start + (schedule.end - schedule.start) * progress
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub variant: Variant,
    pub approximator: ApproxKind,
    pub gamma: f64,
    /// RMSprop learning rate, or the tabular step size.
    pub learning_rate: f64,
    pub batch_size: usize,
    pub memory_capacity: usize,
    pub target_sync_interval: u64,
    pub train_every: u64,
    pub warmup_steps: u64,
    pub max_episodes: usize,
    pub epsilon: EpsilonSchedule,
    #[serde(default)]
    pub shaping: ShapingConfig,
    pub seed: u64,
    #[serde(default = "default_huber_delta")]
    pub huber_delta: f64,
    #[serde(default = "default_rmsprop_decay")]
    pub rmsprop_decay: f64,
    #[serde(default = "default_rmsprop_epsilon")]
    pub rmsprop_epsilon: f64,
}

fn default_huber_delta() -> f64 {
    1.0
}

fn default_rmsprop_decay() -> f64 {
    0.95
}

fn default_rmsprop_epsilon() -> f64 {
    1e-6
}

impl AgentConfig {
    /// Scaled-down defaults for the toy environments: discount, learning rate,
    /// batch size, update cadence and loss as in the large-scale setting, with
    /// memory, target sync and exploration schedule shrunk to match episodes of
    /// tens of steps.
    pub fn desk_scale(variant: Variant, seed: u64) -> Self {
        Self {
            variant,
            approximator: ApproxKind::Mlp { hidden: vec![64, 64] },
            gamma: 0.99,
            learning_rate: 1e-4,
            batch_size: 32,
            memory_capacity: 50_000,
            target_sync_interval: 1_000,
            train_every: 4,
            warmup_steps: 2_000,
            max_episodes: 500,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.1,
                decay_steps: 10_000,
                warmup: 2_000,
            },
            shaping: ShapingConfig::none(),
            seed,
            huber_delta: default_huber_delta(),
            rmsprop_decay: default_rmsprop_decay(),
            rmsprop_epsilon: default_rmsprop_epsilon(),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let bad = |msg: String| Err(AgentError::Config(msg));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 || self.memory_capacity == 0 {
            return bad("batch_size and memory_capacity must be positive".into());
        }
        if self.batch_size > self.memory_capacity {
            return bad(format!(
                "batch_size {} exceeds memory_capacity {}",
                self.batch_size, self.memory_capacity
            ));
        }
        if self.target_sync_interval == 0 || self.train_every == 0 {
            return bad("target_sync_interval and train_every must be positive".into());
        }
        let e = &self.epsilon;
        if !(1.0 >= e.start && e.start >= e.end && e.end >= 0.0) || e.decay_steps == 0 {
            return bad(format!(
                "epsilon schedule must satisfy 1 >= start >= end >= 0 with decay_steps > 0, got {e:?}"
            ));
        }
        if self.huber_delta.is_nan() || self.huber_delta <= 0.0 {
            return bad("huber_delta must be positive".into());
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) || self.rmsprop_epsilon.is_nan() || self.rmsprop_epsilon <= 0.0 {
            return bad("rmsprop_decay must lie in [0, 1) and rmsprop_epsilon be positive".into());
        }
        if self.variant.is_dueling() && self.approximator == ApproxKind::Tabular {
            return bad("the dueling variant needs an MLP approximator".into());
        }
        self.shaping.validate()?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Shaping(#[from] ShapingError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error(transparent)]
    Approx(#[from] ApproxError),
    #[error("numerical failure in episode {episode} at global step {step}: {source}")]
    Numerical {
        episode: usize,
        step: u64,
        #[source]
        source: ApproxError,
    },
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// With probability `epsilon` a uniform random action, otherwise the greedy one.
pub fn select_action<R: Rng + ?Sized>(qvals: &[f64], epsilon: f64, rng: &mut R) -> usize {
    select_action_lazy(qvals.len(), epsilon, rng, || Ok::<_, ApproxError>(qvals.to_vec())).expect("infallible")
}

/// [`select_action`] that evaluates Q only when exploiting. Consumes the
/// generator identically.
fn select_action_lazy<R, F, E>(actions: usize, epsilon: f64, rng: &mut R, qvals: F) -> Result<usize, E>
where
    R: Rng + ?Sized,
    F: FnOnce() -> Result<Vec<f64>, E>,
{
    if rng.gen::<f64>() < epsilon {
        Ok(rng.gen_range(0..actions))
    } else {
        Ok(argmax(&qvals()?))
    }
}

fn finite(values: Vec<f64>) -> Result<Vec<f64>, ApproxError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(values)
    } else {
        Err(ApproxError::NonFinite("Q value"))
    }
}

/// One-step TD targets for a sampled batch of shaped transitions.
///
/// Terminal transitions use the shaped reward alone. Otherwise DQN bootstraps
/// with `max_a Q_target(s', a)`; the double variants evaluate the online
/// network's argmax with the target network.
pub fn td_targets(
    variant: Variant,
    batch: &[Sampled<'_>],
    online: &QApproximator,
    target_net: &QApproximator,
    gamma: f64,
) -> Result<Vec<f64>, ApproxError> {
    batch
        .iter()
        .map(|s| {
            let t = s.transition;
            if t.terminal {
                return Ok(s.shaped_reward);
            }
            let next_target = finite(target_net.q_values(&t.next_state)?)?;
            let bootstrap = match variant {
                Variant::Dqn => next_target.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Variant::DoubleDqn | Variant::DuelingDoubleDqn => {
                    let next_online = finite(online.q_values(&t.next_state)?)?;
                    next_target[argmax(&next_online)]
                }
            };
            Ok(s.shaped_reward + gamma * bootstrap)
        })
        .collect()
}

pub fn sync_target(online: &QApproximator, target_net: &mut QApproximator) -> Result<(), ApproxError> {
    online.clone_into(target_net)
}

/// One row per finished episode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Sum of raw environment rewards.
    pub env_return: f64,
    /// Sum of the rewards after SP/RB.
    pub shaped_return: f64,
    pub length: usize,
    /// Environment steps taken so far, across episodes.
    pub steps: u64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub records: Vec<EpisodeRecord>,
    pub wall_times: Vec<Duration>,
}

pub const HISTORY_CSV_HEADER: &str = "episode,env_return,shaped_return,length,steps,epsilon";

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn env_returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.env_return).collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{HISTORY_CSV_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.episode, r.env_return, r.shaped_return, r.length, r.steps, r.epsilon
            )?;
        }
        Ok(())
    }
}

pub fn build_approximator<R: Rng + ?Sized>(
    config: &AgentConfig,
    spec: &EnvSpec,
    rng: &mut R,
) -> Result<(QApproximator, Optimizer), AgentError> {
    Ok(match &config.approximator {
        ApproxKind::Tabular => (
            QApproximator::Tabular(TabularQ::new(spec.state_count, spec.action_count)),
            Optimizer::Tabular {
                alpha: config.learning_rate,
            },
        ),
        ApproxKind::Mlp { hidden } => {
            let mut widths = vec![spec.feature_dim];
            widths.extend(hidden);
            widths.push(spec.action_count);
            let net = MlpQ::new(&widths, config.variant.is_dueling(), rng)?;
            let opt = RmspropState::new(
                net.param_count(),
                config.learning_rate,
                config.rmsprop_decay,
                config.rmsprop_epsilon,
            );
            (QApproximator::Mlp(net), Optimizer::Rmsprop(opt))
        }
    })
}

/// Online/target networks, optimizer, replay memory and the random stream for
/// one training run.
pub struct Agent {
    config: AgentConfig,
    online: QApproximator,
    target: QApproximator,
    optimizer: Optimizer,
    memory: ReplayMemory,
    rng: StdRng,
    global_step: u64,
}

impl Agent {
    pub fn new(config: AgentConfig, spec: &EnvSpec) -> Result<Self, AgentError> {
        config.validate()?;
        let mut rng = seeded(config.seed);
        let (online, optimizer) = build_approximator(&config, spec, &mut rng)?;
        let target = online.clone();
        let memory = ReplayMemory::new(config.memory_capacity, config.shaping)?;
        Ok(Self {
            config,
            online,
            target,
            optimizer,
            memory,
            rng,
            global_step: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn online(&self) -> &QApproximator {
        &self.online
    }

    pub fn into_online(self) -> QApproximator {
        self.online
    }

    pub fn memory(&self) -> &ReplayMemory {
        &self.memory
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn train(&mut self, env: &mut Env) -> Result<TrainHistory, AgentError> {
        self.train_with(env, |_| {})
    }

    /// Runs `max_episodes` episodes, handing each finished row to `on_episode`.
    pub fn train_with<F>(&mut self, env: &mut Env, mut on_episode: F) -> Result<TrainHistory, AgentError>
    where
        F: FnMut(&EpisodeRecord),
    {
        let spec = env.spec();
        let mut history = TrainHistory::default();
        for episode in 0..self.config.max_episodes {
            let started = Instant::now();
            let reset_seed: u64 = self.rng.gen();
            let mut obs = env.reset(reset_seed);
            let mut rewards = Vec::new();
            let mut terminals = Vec::new();
            let mut epsilon;
            loop {
                epsilon = epsilon_at(&self.config.epsilon, self.global_step);
                let online = &self.online;
                let action = select_action_lazy(spec.action_count, epsilon, &mut self.rng, || online.q_values(&obs))
                    .map_err(|source| AgentError::Numerical {
                        episode,
                        step: self.global_step,
                        source,
                    })?;
                let res = env.step(action)?;
                self.memory
                    .push(obs, action, res.reward, res.next.clone(), res.terminal);
                rewards.push(res.reward);
                terminals.push(res.terminal);
                self.global_step += 1;

                if self.global_step > self.config.warmup_steps
                    && self.global_step.is_multiple_of(self.config.train_every)
                    && self.memory.len() >= self.config.batch_size
                {
                    self.learn().map_err(|source| AgentError::Numerical {
                        episode,
                        step: self.global_step,
                        source,
                    })?;
                }
                if self.global_step.is_multiple_of(self.config.target_sync_interval) {
                    sync_target(&self.online, &mut self.target)?;
                }
                obs = res.next;
                if res.terminal {
                    break;
                }
            }
            let shaped = shape_episode(&rewards, &terminals, &self.config.shaping)?;
            let record = EpisodeRecord {
                episode,
                env_return: rewards.iter().sum(),
                shaped_return: shaped.iter().sum(),
                length: rewards.len(),
                steps: self.global_step,
                epsilon,
            };
            on_episode(&record);
            history.records.push(record);
            history.wall_times.push(started.elapsed());
        }
        Ok(history)
    }

    fn learn(&mut self) -> Result<f64, ApproxError> {
        let batch = self
            .memory
            .sample(self.config.batch_size, &mut self.rng)
            .expect("memory holds at least one batch");
        let targets = td_targets(
            self.config.variant,
            &batch,
            &self.online,
            &self.target,
            self.config.gamma,
        )?;
        let samples: Vec<UpdateSample<'_>> = batch
            .iter()
            .zip(&targets)
            .map(|(s, &target)| UpdateSample {
                obs: &s.transition.state,
                action: s.transition.action,
                target,
            })
            .collect();
        self.online
            .update(&samples, &mut self.optimizer, self.config.huber_delta)
    }

    /// Greedy action for an observation.
    pub fn act_greedy(&self, obs: &Observation) -> Result<usize, ApproxError> {
        Ok(argmax(&self.online.q_values(obs)?))
    }
}

/// Trains a fresh agent and returns its history and final online network.
pub fn train(env: &mut Env, config: &AgentConfig) -> Result<(TrainHistory, QApproximator), AgentError> {
    let mut agent = Agent::new(config.clone(), &env.spec())?;
    let history = agent.train(env)?;
    Ok((history, agent.into_online()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::SparseChain;
    use crate::replay::Transition;

    fn obs(id: usize, f: &[f64]) -> Observation {
        Observation {
            id,
            features: f.to_vec(),
        }
    }

    fn transition(terminal: bool, next: Observation) -> Transition {
        Transition {
            state: obs(0, &[0.0]),
            action: 0,
            env_reward: 0.0,
            next_state: next,
            terminal,
            dist_to_source: None,
            source_reward: None,
        }
    }

    #[test]
    fn epsilon_schedule_examples() {
        let s = EpsilonSchedule {
            start: 1.0,
            end: 0.1,
            decay_steps: 100,
            warmup: 100,
        };
        assert_eq!(epsilon_at(&s, 0), 1.0);
        assert_eq!(epsilon_at(&s, 99), 1.0);
        assert!((epsilon_at(&s, 200) - 0.1).abs() < 1e-15);
        assert!((epsilon_at(&s, 10_000) - 0.1).abs() < 1e-15);
        let s = EpsilonSchedule { warmup: 0, ..s };
        assert!((epsilon_at(&s, 50) - 0.55).abs() < 1e-15);
    }

    #[test]
    fn greedy_selection_and_ties() {
        let mut rng = seeded(0);
        assert_eq!(select_action(&[1.0, 3.0, 2.0], 0.0, &mut rng), 1);
        assert_eq!(select_action(&[2.0, 2.0], 0.0, &mut rng), 0);
        assert_eq!(argmax(&[-1.0, 5.0, 5.0, 4.0]), 1);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = seeded(17);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[select_action(&[9.0, 0.0, 0.0, 0.0], 1.0, &mut rng)] += 1;
        }
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - 2500.0).abs() < 5.0 * sigma, "{counts:?}");
        }
    }

    fn table_net(values: Vec<f64>) -> QApproximator {
        QApproximator::Tabular(TabularQ::from_values(values.len() / 2, 2, values).unwrap())
    }

    #[test]
    fn target_examples() {
        let next = obs(1, &[]);
        // terminal: shaped reward only
        let t = transition(true, next.clone());
        let batch = [Sampled {
            transition: &t,
            shaped_reward: -1.0,
        }];
        let net = table_net(vec![0.0, 0.0, 100.0, 100.0]);
        assert_eq!(td_targets(Variant::Dqn, &batch, &net, &net, 0.99).unwrap(), vec![-1.0]);

        // DQN uses max over the target network
        let t = transition(false, next.clone());
        let batch = [Sampled {
            transition: &t,
            shaped_reward: 1.0,
        }];
        let target = table_net(vec![0.0, 0.0, 2.0, 4.0]);
        let online = table_net(vec![0.0, 0.0, 9.0, -9.0]);
        assert_eq!(
            td_targets(Variant::Dqn, &batch, &online, &target, 0.5).unwrap(),
            vec![3.0]
        );

        // Double: online picks, target evaluates
        let batch = [Sampled {
            transition: &t,
            shaped_reward: 0.0,
        }];
        let online = table_net(vec![0.0, 0.0, 1.0, 5.0]);
        let target = table_net(vec![0.0, 0.0, 10.0, 2.0]);
        let got = td_targets(Variant::DoubleDqn, &batch, &online, &target, 0.9).unwrap();
        assert!((got[0] - 1.8).abs() < 1e-15);
    }

    #[test]
    fn non_finite_q_surfaces() {
        let t = transition(false, obs(1, &[]));
        let batch = [Sampled {
            transition: &t,
            shaped_reward: 0.0,
        }];
        let bad = table_net(vec![0.0, 0.0, f64::NAN, 1.0]);
        assert!(td_targets(Variant::Dqn, &batch, &bad, &bad, 0.9).is_err());
    }

    fn chain_config(seed: u64) -> AgentConfig {
        AgentConfig {
            variant: Variant::Dqn,
            approximator: ApproxKind::Tabular,
            gamma: 0.9,
            learning_rate: 0.5,
            batch_size: 8,
            memory_capacity: 1000,
            target_sync_interval: 20,
            train_every: 1,
            warmup_steps: 0,
            max_episodes: 200,
            epsilon: EpsilonSchedule {
                start: 1.0,
                end: 0.05,
                decay_steps: 500,
                warmup: 0,
            },
            shaping: ShapingConfig::none(),
            seed,
            ..AgentConfig::desk_scale(Variant::Dqn, seed)
        }
    }

    #[test]
    fn tabular_agent_solves_sparse_chain() {
        let mut env = Env::new(SparseChain::new(5, &[4], 50).unwrap());
        let cfg = chain_config(3);
        let (history, online) = train(&mut env, &cfg).unwrap();
        assert_eq!(history.len(), 200);
        // greedy rollout reaches the goal
        let mut o = env.reset(0);
        let mut ret = 0.0;
        loop {
            let a = argmax(&online.q_values(&o).unwrap());
            let r = env.step(a).unwrap();
            ret += r.reward;
            o = r.next;
            if r.terminal {
                break;
            }
        }
        assert_eq!(ret, 1.0);
        assert!(history.records[150..].iter().all(|r| r.env_return == 1.0));
    }

    #[test]
    fn seeded_runs_are_identical() {
        let mut cfg = chain_config(9);
        cfg.shaping = ShapingConfig::hybrid(1.0, 0.65, 10);
        let run = || {
            let mut env = Env::new(SparseChain::new(6, &[2, 5], 30).unwrap());
            train(&mut env, &cfg).unwrap().0.records
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn zero_episodes_gives_empty_history() {
        let mut cfg = chain_config(0);
        cfg.max_episodes = 0;
        let mut env = Env::new(SparseChain::new(5, &[4], 50).unwrap());
        assert!(train(&mut env, &cfg).unwrap().0.is_empty());
    }

    #[test]
    fn env_return_column_is_unshaped() {
        let mut cfg = chain_config(2);
        cfg.shaping = ShapingConfig::hybrid(50.0, 0.5, 10);
        cfg.max_episodes = 30;
        let mut env = Env::new(SparseChain::new(5, &[2, 4], 40).unwrap());
        let (history, _) = train(&mut env, &cfg).unwrap();
        for r in &history.records {
            assert!(r.env_return >= 0.0);
            assert!(r.shaped_return < r.env_return);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = chain_config(0);
        cfg.variant = Variant::DuelingDoubleDqn;
        assert!(matches!(cfg.validate(), Err(AgentError::Config(_))));
        let mut cfg = chain_config(0);
        cfg.batch_size = 2000;
        assert!(cfg.validate().is_err());
        let mut cfg = chain_config(0);
        cfg.gamma = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = chain_config(0);
        cfg.epsilon.end = 0.9;
        cfg.epsilon.start = 0.5;
        assert!(cfg.validate().is_err());
        assert!(chain_config(0).validate().is_ok());
    }

    #[test]
    fn history_csv() {
        let h = TrainHistory {
            records: vec![EpisodeRecord {
                episode: 0,
                env_return: 1.0,
                shaped_return: -0.5,
                length: 3,
                steps: 3,
                epsilon: 0.25,
            }],
            wall_times: vec![Duration::ZERO],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "episode,env_return,shaped_return,length,steps,epsilon\n0,1,-0.5,3,3,0.25\n"
        );
    }
}
