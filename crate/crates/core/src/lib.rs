//! Monte Carlo tree search for cooperative multi-agent problems.
//!
//! Joint actions are encoded as n-hot vectors and each search node keeps a
//! linear bandit over that encoding (`design`). Node expansion picks new
//! joint actions greedily, one agent at a time (`select`), so the joint
//! space never has to be enumerated.

pub mod action;
pub mod bandit;
pub mod baselines;
pub mod design;
pub mod envs;
pub mod error;
pub mod linalg;
pub mod loss;
pub mod mcts;
pub mod select;

pub use action::{joint_space_size, JointAction};
pub use baselines::SelectorKind;
pub use design::{BetaSchedule, DesignConfig, DesignState, UpdateStats};
pub use envs::{MatGame, MatGameModel, MatGameSpec, Model, RewardMode};
pub use error::{Error, Result};
pub use loss::ConvexLoss;
pub use mcts::{CoefficientSchedule, PlanOutcome, Planner, SearchConfig};
pub use select::{AgentPriors, Exploration, SelectionObjective};
