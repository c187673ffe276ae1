//! Joint actions of `n` agents choosing among `d` local actions each, and
//! their n-hot vector encoding.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One local action per agent.
///
/// Ordering is lexicographic over the per-agent indices, which is the
/// tie-break order used by every selector in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointAction {
    actions_per_agent: usize,
    indices: Vec<usize>,
}

impl JointAction {
    pub fn new(actions_per_agent: usize, indices: Vec<usize>) -> Result<Self> {
        if actions_per_agent == 0 {
            return Err(Error::InvalidAction("actions per agent must be positive".into()));
        }
        if indices.is_empty() {
            return Err(Error::InvalidAction("a joint action needs at least one agent".into()));
        }
        if let Some((agent, &idx)) = indices.iter().enumerate().find(|(_, &i)| i >= actions_per_agent) {
            return Err(Error::InvalidAction(format!(
                "agent {agent} picked action {idx}, but only {actions_per_agent} actions exist"
            )));
        }
        Ok(Self { actions_per_agent, indices })
    }

    pub fn agents(&self) -> usize {
        self.indices.len()
    }

    pub fn actions_per_agent(&self) -> usize {
        self.actions_per_agent
    }

    /// Length of the encoded vector, `n * d`.
    pub fn dim(&self) -> usize {
        self.indices.len() * self.actions_per_agent
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Positions of the ones in the n-hot encoding, in agent order.
    pub fn coords(&self) -> impl Iterator<Item = usize> + '_ {
        let d = self.actions_per_agent;
        self.indices.iter().enumerate().map(move |(agent, &idx)| agent * d + idx)
    }

    /// Dense n-hot vector: a one at `agent * d + index` for every agent.
    pub fn encode(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for c in self.coords() {
            out[c] = 1.0;
        }
        out
    }

    /// Inner product with a dense vector of length `n * d`.
    pub fn dot(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim());
        self.coords().map(|c| v[c]).sum()
    }

    /// Checks that the action lives in the `(n, d)` joint space.
    pub fn check_shape(&self, agents: usize, actions_per_agent: usize) -> Result<()> {
        if self.agents() != agents || self.actions_per_agent != actions_per_agent {
            return Err(Error::InvalidAction(format!(
                "action has shape {}x{}, expected {agents}x{actions_per_agent}",
                self.agents(),
                self.actions_per_agent
            )));
        }
        Ok(())
    }

    /// Every joint action of the space in lexicographic order.
    pub fn enumerate(agents: usize, actions_per_agent: usize) -> JointActionIter {
        JointActionIter {
            d: actions_per_agent,
            next: (agents > 0 && actions_per_agent > 0).then(|| vec![0; agents]),
        }
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.indices.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", parts.join("-"))
    }
}

/// Size of the joint action space `d^n`, saturating at `u128::MAX`.
pub fn joint_space_size(agents: usize, actions_per_agent: usize) -> u128 {
    let mut size: u128 = 1;
    for _ in 0..agents {
        size = size.saturating_mul(actions_per_agent as u128);
    }
    size
}

pub struct JointActionIter {
    d: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for JointActionIter {
    type Item = JointAction;

    fn next(&mut self) -> Option<JointAction> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        // odometer increment, last agent fastest
        let mut pos = succ.len();
        let mut carried = true;
        while carried && pos > 0 {
            pos -= 1;
            succ[pos] += 1;
            if succ[pos] == self.d {
                succ[pos] = 0;
            } else {
                carried = false;
            }
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(JointAction {
            actions_per_agent: self.d,
            indices: current,
        })
    }
}
