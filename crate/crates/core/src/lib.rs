//! Deep Q-learning with self-punishment (SP) and reward-backfill (RB) reward
//! reshaping.
//!
//! The crate is split along the lines of the training stack:
//!
//! * [`env`]: small deterministic episodic MDPs with controllable reward sparsity.
//! * [`shaping`]: pure, whole-episode SP/RB functions. These double as the oracle
//!   for the incremental implementation in [`replay`].
//! * [`replay`]: bounded replay memory that stores backfill bookkeeping so shaped
//!   rewards are produced in O(1) at sampling time.
//! * [`approx`]: tabular and MLP (optionally dueling) Q-function approximators.
//! * [`agent`]: the epsilon-greedy training loop for DQN, Double DQN and Dueling
//!   Double DQN.
//! * [`verify`]: exhaustive policy enumeration, value iteration and
//!   order-preservation checks.
//! * [`metrics`]: performance, average rank and improvement arithmetic.

pub mod agent;
pub mod approx;
pub mod env;
pub mod metrics;
pub mod replay;
pub mod rng;
pub mod shaping;
pub mod verify;

pub use agent::{AgentConfig, EpsilonSchedule, TrainHistory, Variant};
pub use approx::{MlpQ, QApproximator, TabularQ};
pub use env::{Env, EnvSpec, Observation, StepResult};
pub use replay::{ReplayMemory, Transition};
pub use shaping::ShapingConfig;
pub use verify::PirfReport;
