//! Joint-action selection over the n-hot action space.
//!
//! Scoring a complete joint action is cheap, but the space has `d^n`
//! members. [`greedy_select`] fills one agent block at a time, always taking
//! the single coordinate with the largest gain in the objective, which costs
//! `O(n^2 d)` score evaluations. [`brute_force_select`] enumerates the space
//! and exists to validate the greedy result on small instances.
//!
//! [`RadiusSetFunction`] is the set-function form of the objective, used to
//! study monotonicity and diminishing returns over the coordinate ground set
//! where each agent block is one part of a partition matroid. Its base
//! matrix is the node's current design, so `V(S)` is the design after the
//! coordinates in `S` have each been observed once more.

use std::borrow::Cow;

use serde::{Deserialize, Serialize};

use crate::action::{joint_space_size, JointAction};
use crate::design::DesignState;
use crate::error::{Error, Result};
use crate::linalg;

/// Default enumeration cap for [`brute_force_select`].
pub const DEFAULT_ENUMERATION_CAP: u128 = 100_000;

/// Factorized prior: one categorical distribution per agent. The joint prior
/// of an action is the product of its per-agent probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentPriors {
    probs: Vec<Vec<f64>>,
}

impl AgentPriors {
    pub fn uniform(agents: usize, actions_per_agent: usize) -> Self {
        let p = 1.0 / actions_per_agent as f64;
        Self {
            probs: vec![vec![p; actions_per_agent]; agents],
        }
    }

    /// Normalizes each agent's weights; fails when a row cannot be.
    pub fn new(weights: Vec<Vec<f64>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Config("prior needs at least one agent".into()));
        }
        let d = weights[0].len();
        let mut probs = Vec::with_capacity(weights.len());
        for (agent, row) in weights.into_iter().enumerate() {
            if row.len() != d || d == 0 {
                return Err(Error::Config(format!("prior row {agent} has the wrong length")));
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::Config(format!("prior row {agent} has invalid weights")));
            }
            let total: f64 = row.iter().sum();
            if total <= 0.0 || !total.is_finite() {
                return Err(Error::Config(format!("prior row {agent} is not normalizable")));
            }
            probs.push(row.into_iter().map(|w| w / total).collect());
        }
        Ok(Self { probs })
    }

    pub fn agents(&self) -> usize {
        self.probs.len()
    }

    pub fn actions_per_agent(&self) -> usize {
        self.probs[0].len()
    }

    pub fn agent(&self, agent: usize) -> &[f64] {
        &self.probs[agent]
    }

    pub fn prob(&self, action: &JointAction) -> f64 {
        action
            .indices()
            .iter()
            .enumerate()
            .map(|(agent, &idx)| self.probs[agent][idx])
            .product()
    }
}

/// How the exploration width is scaled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exploration {
    /// `c * P(s, a) * trace(V)`, the in-tree rule.
    Practical { c: f64 },
    /// A fixed confidence radius `beta`, the bandit rule.
    Confidence { beta: f64 },
}

/// Objective `Psi(a) = a^T theta + scale(a) * sqrt(a^T V^{-1} a)` over a
/// snapshot of a design state.
#[derive(Debug, Clone)]
pub struct SelectionObjective<'a> {
    design: &'a DesignState,
    priors: &'a AgentPriors,
    exploration: Exploration,
    shift: bool,
}

impl<'a> SelectionObjective<'a> {
    pub fn new(design: &'a DesignState, priors: &'a AgentPriors, exploration: Exploration) -> Self {
        Self {
            design,
            priors,
            exploration,
            shift: true,
        }
    }

    /// Whether the linear term uses `theta - min(theta)` (default) so every
    /// coordinate contributes a non-negative value. For complete actions the
    /// shift adds the same constant to every score.
    pub fn with_shift(mut self, shift: bool) -> Self {
        self.shift = shift;
        self
    }

    pub fn design(&self) -> &DesignState {
        self.design
    }

    pub fn priors(&self) -> &AgentPriors {
        self.priors
    }

    pub fn exploration(&self) -> Exploration {
        self.exploration
    }

    fn offset(&self) -> f64 {
        if self.shift {
            self.design.theta().iter().copied().fold(f64::INFINITY, f64::min).min(0.0)
        } else {
            0.0
        }
    }

    /// Linear weights actually used, `theta` or `theta - min(theta)`.
    pub fn linear_weights(&self) -> Vec<f64> {
        let off = self.offset();
        self.design.theta().iter().map(|t| t - off).collect()
    }

    fn scale_for_prob(&self, prob: f64) -> f64 {
        match self.exploration {
            Exploration::Practical { c } => c * prob * self.design.trace(),
            Exploration::Confidence { beta } => beta,
        }
    }

    /// Scale applied to widths when the prior is uniform.
    pub fn uniform_scale(&self) -> f64 {
        let d = self.priors.actions_per_agent() as f64;
        self.scale_for_prob(d.powi(-(self.priors.agents() as i32)))
    }

    fn check(&self, action: &JointAction) -> Result<()> {
        action.check_shape(self.design.agents(), self.design.actions_per_agent())
    }

    /// `Psi(a)` for a complete joint action.
    pub fn value(&self, action: &JointAction) -> Result<f64> {
        self.check(action)?;
        let quad = self.design.quad(action)?;
        let off = self.offset();
        let lin = self.design.predict(action) - off * action.agents() as f64;
        let scale = self.scale_for_prob(self.priors.prob(action));
        Ok(lin + scale * quad.max(0.0).sqrt())
    }

    /// The set-function view of this objective over coordinates, with the
    /// width scale taken at the uniform prior.
    pub fn set_function(&self) -> Result<RadiusSetFunction> {
        Ok(RadiusSetFunction {
            theta: self.linear_weights(),
            scale: self.uniform_scale(),
            base: self.design.design_matrix()?,
        })
    }
}

/// Candidate local actions per agent block.
pub type Blocks = Vec<Vec<usize>>;

/// Every local action in every block.
pub fn full_blocks(agents: usize, actions_per_agent: usize) -> Blocks {
    vec![(0..actions_per_agent).collect(); agents]
}

fn check_blocks(obj: &SelectionObjective<'_>, blocks: &Blocks) -> Result<()> {
    let n = obj.design.agents();
    let d = obj.design.actions_per_agent();
    if blocks.len() != n {
        return Err(Error::InvalidPartition(format!("expected {n} blocks, got {}", blocks.len())));
    }
    for (agent, block) in blocks.iter().enumerate() {
        if block.is_empty() {
            return Err(Error::InvalidPartition(format!("block {agent} is empty")));
        }
        if let Some(&bad) = block.iter().find(|&&j| j >= d) {
            return Err(Error::InvalidPartition(format!(
                "block {agent} names action {bad}, only {d} exist"
            )));
        }
    }
    Ok(())
}

/// Builds a joint action by repeatedly adding the single (agent, action)
/// coordinate with the largest gain in `Psi` among the unfilled blocks.
///
/// The width scale of a partial action uses the prior of its filled agents
/// and the uniform probability `1/d` for the rest. Ties go to the smallest
/// `(agent, action)` pair.
pub fn greedy_select(obj: &SelectionObjective<'_>, blocks: &Blocks) -> Result<JointAction> {
    check_blocks(obj, blocks)?;
    let n = obj.design.agents();
    let d = obj.design.actions_per_agent();
    let dim = n * d;
    let inv: Cow<'_, [f64]> = obj.design.inverse();
    let lin = obj.linear_weights();
    let uniform = 1.0 / d as f64;

    let mut chosen: Vec<Option<usize>> = vec![None; n];
    // V^{-1} x_S for the partial action x_S
    let mut vx = vec![0.0; dim];
    let mut quad = 0.0;
    let mut linear = 0.0;
    let mut prob = uniform.powi(n as i32);
    let mut current = 0.0;

    for _ in 0..n {
        let mut best: Option<(f64, usize, usize, f64, f64, f64)> = None;
        for (agent, block) in blocks.iter().enumerate() {
            if chosen[agent].is_some() {
                continue;
            }
            for &j in block {
                let v = agent * d + j;
                let q = quad + 2.0 * vx[v] + inv[v * dim + v];
                let l = linear + lin[v];
                let p = prob / uniform * obj.priors.agent(agent)[j];
                let value = l + obj.scale_for_prob(p) * q.max(0.0).sqrt();
                let gain = value - current;
                if best.as_ref().is_none_or(|b| gain > b.0) {
                    best = Some((gain, agent, j, q, l, p));
                }
            }
        }
        let (gain, agent, j, q, l, p) = best.expect("blocks are non-empty");
        let v = agent * d + j;
        for (x, &col) in vx.iter_mut().zip(&inv[v * dim..(v + 1) * dim]) {
            *x += col;
        }
        chosen[agent] = Some(j);
        quad = q;
        linear = l;
        prob = p;
        current += gain;
    }
    JointAction::new(d, chosen.into_iter().map(|c| c.expect("every block filled")).collect())
}

/// Exact argmax of `Psi` over the cartesian product of the blocks; ties go
/// to the lexicographically smallest action.
pub fn brute_force_select(
    obj: &SelectionObjective<'_>,
    blocks: &Blocks,
    cap: u128,
) -> Result<(JointAction, f64)> {
    check_blocks(obj, blocks)?;
    let size = blocks
        .iter()
        .fold(1u128, |acc, b| acc.saturating_mul(b.len() as u128));
    if size > cap {
        return Err(Error::SearchSpaceTooLarge { size, cap });
    }
    let d = obj.design.actions_per_agent();
    let inv = obj.design.inverse();
    let lin = obj.linear_weights();
    let mut best: Option<(JointAction, f64)> = None;
    let mut sorted: Blocks = blocks.clone();
    for b in sorted.iter_mut() {
        b.sort_unstable();
        b.dedup();
    }
    let dim = obj.design.dim();
    let mut odo = vec![0usize; sorted.len()];
    let mut coords = vec![0usize; sorted.len()];
    loop {
        // Scored straight from coordinates; a JointAction is only built for
        // a new incumbent.
        let mut quad = 0.0;
        let mut linear = 0.0;
        let mut prob = 1.0;
        for (agent, (&k, b)) in odo.iter().zip(&sorted).enumerate() {
            coords[agent] = agent * d + b[k];
            linear += lin[coords[agent]];
            prob *= obj.priors.agent(agent)[b[k]];
        }
        for &i in &coords {
            let row = &inv[i * dim..(i + 1) * dim];
            quad += coords.iter().map(|&j| row[j]).sum::<f64>();
        }
        let value = linear + obj.scale_for_prob(prob) * quad.max(0.0).sqrt();
        if best.as_ref().is_none_or(|(_, v)| value > *v) {
            let action = JointAction::new(d, odo.iter().zip(&sorted).map(|(&k, b)| b[k]).collect())?;
            best = Some((action, value));
        }
        let mut pos = odo.len();
        loop {
            if pos == 0 {
                return Ok(best.expect("at least one action enumerated"));
            }
            pos -= 1;
            odo[pos] += 1;
            if odo[pos] < sorted[pos].len() {
                break;
            }
            odo[pos] = 0;
        }
    }
}

/// Exact argmax over the full joint space (convenience wrapper).
pub fn exact_argmax(obj: &SelectionObjective<'_>) -> Result<JointAction> {
    let n = obj.design.agents();
    let d = obj.design.actions_per_agent();
    let size = joint_space_size(n, d);
    let cap = DEFAULT_ENUMERATION_CAP;
    if size > cap {
        return Err(Error::SearchSpaceTooLarge { size, cap });
    }
    brute_force_select(obj, &full_blocks(n, d), cap).map(|(a, _)| a)
}

/// Set function
/// `Psi(S) = sum_{v in S} ( v^T theta + scale * ||v||_{V(S)^{-1}} )` with
/// `V(S) = B + sum_{v in S} v v^T` for a positive-definite base `B`
/// (row-major).
///
/// Elements are arbitrary vectors; the selection code uses unit coordinate
/// vectors `e_{agent * d + action}`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadiusSetFunction {
    pub theta: Vec<f64>,
    pub scale: f64,
    pub base: Vec<f64>,
}

impl RadiusSetFunction {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn value(&self, set: &[Vec<f64>]) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        let dim = self.dim();
        if self.base.len() != dim * dim {
            return Err(Error::Numeric("base matrix does not match theta".into()));
        }
        let mut v = self.base.clone();
        for x in set {
            if x.len() != dim {
                return Err(Error::InvalidAction("set element has the wrong length".into()));
            }
            for i in 0..dim {
                if x[i] != 0.0 {
                    for j in 0..dim {
                        v[i * dim + j] += x[i] * x[j];
                    }
                }
            }
        }
        let chol = linalg::Cholesky::factor(&v, dim)?;
        let mut total = 0.0;
        for x in set {
            let lin: f64 = x.iter().zip(&self.theta).map(|(a, b)| a * b).sum();
            total += lin + self.scale * chol.inverse_quad(x).max(0.0).sqrt();
        }
        Ok(total)
    }

    fn unit(&self, coord: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[coord] = 1.0;
        e
    }

    pub fn value_coords(&self, coords: &[usize]) -> Result<f64> {
        let set: Vec<Vec<f64>> = coords.iter().map(|&c| self.unit(c)).collect();
        self.value(&set)
    }
}

/// `Psi(S + {candidate}) - Psi(S)` over (agent, action) coordinates.
///
/// `partial` must hold at most one coordinate per agent and the candidate's
/// agent must not appear in it.
pub fn marginal_gain(
    obj: &SelectionObjective<'_>,
    partial: &[(usize, usize)],
    candidate: (usize, usize),
) -> Result<f64> {
    let n = obj.design.agents();
    let d = obj.design.actions_per_agent();
    let mut seen = vec![false; n];
    for &(agent, j) in partial.iter().chain(std::iter::once(&candidate)) {
        if agent >= n || j >= d {
            return Err(Error::InvalidAction(format!("coordinate ({agent}, {j}) is out of range")));
        }
        if std::mem::replace(&mut seen[agent], true) {
            return Err(Error::InvalidPartition(format!(
                "agent {agent} would get two coordinates"
            )));
        }
    }
    let f = obj.set_function()?;
    let mut coords: Vec<usize> = partial.iter().map(|&(a, j)| a * d + j).collect();
    let before = f.value_coords(&coords)?;
    coords.push(candidate.0 * d + candidate.1);
    Ok(f.value_coords(&coords)? - before)
}
