//! Single-state bandit agents over the joint action space.
//!
//! These isolate the selection rules from tree search: the linear agent
//! learns `nd` coefficients, the flat agent keeps one arm per joint action.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{joint_space_size, JointAction};
use crate::design::{BetaSchedule, DesignConfig, DesignState};
use crate::error::{Error, Result};
use crate::loss::ConvexLoss;
use crate::select::{
    exact_argmax, full_blocks, greedy_select, AgentPriors, Exploration, SelectionObjective,
    DEFAULT_ENUMERATION_CAP,
};

pub trait BanditAgent {
    fn choose(&mut self) -> Result<JointAction>;
    fn observe(&mut self, action: &JointAction, reward: f64) -> Result<()>;

    /// Current confidence radius, for agents that keep one.
    fn beta(&self) -> Option<f64> {
        None
    }
}

/// Confidence-ellipsoid linear bandit:
/// `argmax_a a^T theta + beta_t ||a||_{V^{-1}}`, with observations weighted
/// by the loss curvature on the sign of the residual.
#[derive(Debug, Clone)]
pub struct LinUctBandit {
    design: DesignState,
    schedule: BetaSchedule,
    loss: ConvexLoss,
    priors: AgentPriors,
}

impl LinUctBandit {
    pub fn new(
        agents: usize,
        actions_per_agent: usize,
        design: &DesignConfig,
        loss: ConvexLoss,
        delta: f64,
        norm_bound: f64,
    ) -> Result<Self> {
        loss.validate()?;
        let state = DesignState::new(agents, actions_per_agent, design)?;
        let schedule = BetaSchedule::new(delta, norm_bound, loss.mu(), design.lambda)?;
        Ok(Self {
            design: state,
            schedule,
            loss,
            priors: AgentPriors::uniform(agents, actions_per_agent),
        })
    }

    pub fn design(&self) -> &DesignState {
        &self.design
    }

    pub fn schedule(&self) -> &BetaSchedule {
        &self.schedule
    }
}

impl BanditAgent for LinUctBandit {
    fn choose(&mut self) -> Result<JointAction> {
        let objective = SelectionObjective::new(
            &self.design,
            &self.priors,
            Exploration::Confidence {
                beta: self.schedule.beta(),
            },
        );
        let (n, d) = (self.design.agents(), self.design.actions_per_agent());
        if joint_space_size(n, d) <= DEFAULT_ENUMERATION_CAP {
            exact_argmax(&objective)
        } else {
            greedy_select(&objective, &full_blocks(n, d))
        }
    }

    fn observe(&mut self, action: &JointAction, reward: f64) -> Result<()> {
        let residual = reward - self.design.predict(action);
        let weight = self.loss.weight(residual);
        let stats = self.design.update(action, reward, weight)?;
        self.schedule.record(&stats);
        Ok(())
    }

    fn beta(&self) -> Option<f64> {
        Some(self.schedule.beta())
    }
}

/// UCB1 with one arm per joint action.
#[derive(Debug, Clone)]
pub struct FlatUcbBandit {
    agents: usize,
    actions_per_agent: usize,
    pulls: Vec<u64>,
    sums: Vec<f64>,
    total: u64,
}

impl FlatUcbBandit {
    pub fn new(agents: usize, actions_per_agent: usize) -> Result<Self> {
        let size = joint_space_size(agents, actions_per_agent);
        if agents == 0 || actions_per_agent == 0 {
            return Err(Error::Config("empty joint action space".into()));
        }
        if size > DEFAULT_ENUMERATION_CAP {
            return Err(Error::SearchSpaceTooLarge {
                size,
                cap: DEFAULT_ENUMERATION_CAP,
            });
        }
        Ok(Self {
            agents,
            actions_per_agent,
            pulls: vec![0; size as usize],
            sums: vec![0.0; size as usize],
            total: 0,
        })
    }

    fn arm(&self, action: &JointAction) -> Result<usize> {
        action.check_shape(self.agents, self.actions_per_agent)?;
        Ok(action
            .indices()
            .iter()
            .fold(0, |acc, &i| acc * self.actions_per_agent + i))
    }

    fn decode(&self, mut arm: usize) -> JointAction {
        let d = self.actions_per_agent;
        let mut indices = vec![0; self.agents];
        for slot in indices.iter_mut().rev() {
            *slot = arm % d;
            arm /= d;
        }
        JointAction::new(d, indices).expect("arm index in range")
    }
}

impl BanditAgent for FlatUcbBandit {
    fn choose(&mut self) -> Result<JointAction> {
        // Arms are numbered in lexicographic order, so the first maximum is
        // also the lexicographically smallest.
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for arm in 0..self.pulls.len() {
            let pulls = self.pulls[arm];
            if pulls == 0 {
                best = arm;
                break;
            }
            let mean = self.sums[arm] / pulls as f64;
            let score = crate::baselines::flat_ucb_score(mean, pulls, self.total);
            if score > best_score {
                best_score = score;
                best = arm;
            }
        }
        Ok(self.decode(best))
    }

    fn observe(&mut self, action: &JointAction, reward: f64) -> Result<()> {
        let arm = self.arm(action)?;
        self.pulls[arm] += 1;
        self.sums[arm] += reward;
        self.total += 1;
        Ok(())
    }
}

/// Uniformly random joint actions.
#[derive(Debug, Clone)]
pub struct RandomBandit {
    agents: usize,
    actions_per_agent: usize,
    rng: ChaCha8Rng,
}

impl RandomBandit {
    pub fn new(agents: usize, actions_per_agent: usize, seed: u64) -> Self {
        Self {
            agents,
            actions_per_agent,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl BanditAgent for RandomBandit {
    fn choose(&mut self) -> Result<JointAction> {
        let d = self.actions_per_agent;
        let indices = (0..self.agents).map(|_| self.rng.random_range(0..d)).collect();
        JointAction::new(d, indices)
    }

    fn observe(&mut self, action: &JointAction, _reward: f64) -> Result<()> {
        action.check_shape(self.agents, self.actions_per_agent)
    }
}
