//! Stateless cooperative matrix games.
//!
//! Every agent picks one of `d` actions and the team receives a shared
//! reward equal to the sum of the chosen action indices. In noisy mode each
//! reward query adds a fresh Gaussian term and a fresh uniform term, scaled
//! by `noise_scale`.
//!
//! Randomness comes from ChaCha8 streams seeded with `seed`, so reward
//! sequences are reproducible across platforms.

use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::action::{joint_space_size, JointAction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    /// Deterministic payoff.
    Linear,
    /// Payoff plus zero-mean Gaussian and uniform noise.
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatGameSpec {
    pub agents: usize,
    pub actions: usize,
    pub mode: RewardMode,
    pub noise_gauss_sigma: f64,
    pub noise_uniform_halfwidth: f64,
    /// Multiplies both noise terms; `1/sqrt(7)` gives unit variance with the
    /// default widths.
    pub noise_scale: f64,
    pub seed: u64,
    pub episode_length: usize,
}

impl Default for MatGameSpec {
    fn default() -> Self {
        Self {
            agents: 2,
            actions: 3,
            mode: RewardMode::Linear,
            noise_gauss_sigma: 2.0,
            noise_uniform_halfwidth: 3.0,
            noise_scale: 1.0,
            seed: 0,
            episode_length: 1,
        }
    }
}

impl MatGameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.agents == 0 || self.actions == 0 {
            return Err(Error::Config("matrix game needs agents >= 1 and actions >= 1".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Config("episode_length must be at least 1".into()));
        }
        for (name, v) in [
            ("noise_gauss_sigma", self.noise_gauss_sigma),
            ("noise_uniform_halfwidth", self.noise_uniform_halfwidth),
            ("noise_scale", self.noise_scale),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("{name} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines (TOML); unknown keys are rejected.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// Noise-free reward: the sum of the chosen action indices. This is the
    /// only place the payoff definition lives.
    pub fn mean_reward(&self, action: &JointAction) -> Result<f64> {
        action.check_shape(self.agents, self.actions)?;
        Ok(action.indices().iter().sum::<usize>() as f64)
    }

    /// Per-coordinate payoff vector `theta*` of the linear structure.
    pub fn payoff_weights(&self) -> Vec<f64> {
        (0..self.agents)
            .flat_map(|_| (0..self.actions).map(|j| j as f64))
            .collect()
    }

    pub fn noise_variance(&self) -> f64 {
        match self.mode {
            RewardMode::Linear => 0.0,
            RewardMode::Nonlinear => {
                let s2 = self.noise_scale * self.noise_scale;
                s2 * (self.noise_gauss_sigma.powi(2) + self.noise_uniform_halfwidth.powi(2) / 3.0)
            }
        }
    }

    /// One noise draw. Always consumes the same random calls regardless of
    /// the action, so two agents sharing a seed see common random numbers.
    pub fn sample_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mode == RewardMode::Linear {
            return 0.0;
        }
        let gauss = Normal::new(0.0, self.noise_gauss_sigma)
            .expect("sigma validated")
            .sample(rng);
        let h = self.noise_uniform_halfwidth;
        let unif = if h > 0.0 { rng.random_range(-h..h) } else { 0.0 };
        self.noise_scale * (gauss + unif)
    }

    pub fn reward<R: Rng + ?Sized>(&self, action: &JointAction, rng: &mut R) -> Result<f64> {
        let mean = self.mean_reward(action)?;
        Ok(mean + self.sample_noise(rng))
    }

    /// Best joint action and its expected reward: every agent takes its
    /// highest index.
    pub fn oracle_optimum(&self) -> (JointAction, f64) {
        let action = JointAction::new(self.actions, vec![self.actions - 1; self.agents])
            .expect("valid shape");
        let value = (self.agents * (self.actions - 1)) as f64;
        (action, value)
    }

    /// Writes `indices..., mean_reward` rows for every joint action.
    pub fn write_reward_table<W: Write>(&self, out: &mut W, cap: u128) -> Result<()> {
        let size = joint_space_size(self.agents, self.actions);
        if size > cap {
            return Err(Error::SearchSpaceTooLarge { size, cap });
        }
        let io = |e: std::io::Error| Error::Config(format!("write failed: {e}"));
        let header: Vec<String> = (0..self.agents).map(|i| format!("agent{i}")).collect();
        writeln!(out, "{},mean_reward", header.join(",")).map_err(io)?;
        for a in JointAction::enumerate(self.agents, self.actions) {
            let idx: Vec<String> = a.indices().iter().map(|i| i.to_string()).collect();
            writeln!(out, "{},{}", idx.join(","), self.mean_reward(&a)?).map_err(io)?;
        }
        Ok(())
    }
}

/// A running game instance; its only state is the step counter.
#[derive(Debug, Clone)]
pub struct MatGame {
    spec: MatGameSpec,
    rng: ChaCha8Rng,
    steps: usize,
}

impl MatGame {
    pub fn new(spec: MatGameSpec) -> Result<Self> {
        spec.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(Self { spec, rng, steps: 0 })
    }

    pub fn spec(&self) -> &MatGameSpec {
        &self.spec
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn remaining(&self) -> usize {
        self.spec.episode_length - self.steps
    }

    pub fn is_done(&self) -> bool {
        self.steps >= self.spec.episode_length
    }

    /// Starts a new episode; the noise stream continues.
    pub fn reset(&mut self) {
        self.steps = 0;
    }

    pub fn step(&mut self, action: &JointAction) -> Result<(f64, bool)> {
        if self.is_done() {
            return Err(Error::Protocol("step called after the episode ended".into()));
        }
        let reward = self.spec.reward(action, &mut self.rng)?;
        self.steps += 1;
        Ok((reward, self.is_done()))
    }
}

/// Environment model queried by the tree search.
pub trait Model {
    type State: Clone + std::fmt::Debug;

    fn agents(&self) -> usize;
    fn actions_per_agent(&self) -> usize;
    fn step(&mut self, state: &Self::State, action: &JointAction) -> Result<(f64, Self::State)>;
    fn is_terminal(&self, state: &Self::State) -> bool;

    /// Value estimate at a newly expanded leaf. Without a learned value
    /// function this is zero.
    fn leaf_value(&mut self, _state: &Self::State) -> Result<f64> {
        Ok(0.0)
    }
}

/// Ground-truth matrix game used as a planning model. The state counts the
/// steps taken inside the planning horizon.
#[derive(Debug, Clone)]
pub struct MatGameModel {
    spec: MatGameSpec,
    horizon: usize,
    rng: ChaCha8Rng,
}

impl MatGameModel {
    pub fn new(spec: MatGameSpec, horizon: usize, rng: ChaCha8Rng) -> Result<Self> {
        spec.validate()?;
        if horizon == 0 {
            return Err(Error::Config("planning horizon must be at least 1".into()));
        }
        Ok(Self { spec, horizon, rng })
    }

    pub fn into_rng(self) -> ChaCha8Rng {
        self.rng
    }
}

impl Model for MatGameModel {
    type State = usize;

    fn agents(&self) -> usize {
        self.spec.agents
    }

    fn actions_per_agent(&self) -> usize {
        self.spec.actions
    }

    fn step(&mut self, state: &usize, action: &JointAction) -> Result<(f64, usize)> {
        if *state >= self.horizon {
            return Err(Error::Model("stepped past the planning horizon".into()));
        }
        Ok((self.spec.reward(action, &mut self.rng)?, state + 1))
    }

    fn is_terminal(&self, state: &usize) -> bool {
        *state >= self.horizon
    }
}
