//! Tree search: selection, dynamic node generation, sampled expansion and
//! weighted back-propagation.
//!
//! Every node owns a [`DesignState`] over the n-hot encoding of its children.
//! While a node has fewer than `chi` children, selection asks the greedy
//! optimizer for the best joint action in the whole joint space and adds it
//! as a child if it is new; at capacity the child set is frozen and
//! selection is an argmax over the existing children.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::{joint_space_size, JointAction};
use crate::baselines::{flat_ucb_score, puct_score, SelectorKind};
use crate::design::{DesignConfig, DesignState};
use crate::envs::Model;
use crate::error::{Error, Result};
use crate::loss::ConvexLoss;
use crate::select::{full_blocks, greedy_select, AgentPriors, Exploration, SelectionObjective};

/// Exploration coefficient `c(s)` as a function of the node's visit total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSchedule {
    Constant { c: f64 },
    /// `c1 + ln((N + c2 + 1) / c2)`.
    Log { c1: f64, c2: f64 },
}

impl Default for CoefficientSchedule {
    fn default() -> Self {
        Self::Log {
            c1: 1.25,
            c2: 19652.0,
        }
    }
}

impl CoefficientSchedule {
    pub fn value(&self, total_visits: u64) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::Log { c1, c2 } => c1 + ((total_visits as f64 + c2 + 1.0) / c2).ln(),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { c } => c.is_finite() && c >= 0.0,
            Self::Log { c1, c2 } => c1.is_finite() && c1 >= 0.0 && c2.is_finite() && c2 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid exploration schedule {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub num_simulations: usize,
    /// Maximum number of children per node.
    pub chi: usize,
    /// Fraction of `chi` sampled when a node is first expanded.
    pub zeta: f64,
    pub gamma: f64,
    pub c_fn: CoefficientSchedule,
    pub loss: ConvexLoss,
    pub design: DesignConfig,
    /// Min-max normalize Q across the tree for pUCT.
    pub normalize_q: bool,
    // Only meaningful for learned-value reanalysis; kept so configs that
    // set them still load.
    pub value_quantile: f64,
    pub decay_lambda: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            num_simulations: 50,
            chi: 3,
            zeta: 0.6,
            gamma: 0.99,
            c_fn: CoefficientSchedule::default(),
            loss: ConvexLoss::default(),
            design: DesignConfig::default(),
            normalize_q: false,
            value_quantile: 0.75,
            decay_lambda: 0.8,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chi == 0 {
            return Err(Error::Config("chi must be at least 1".into()));
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return Err(Error::Config(format!("zeta must lie in (0, 1], got {}", self.zeta)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        self.c_fn.validate()?;
        self.loss.validate()?;
        self.design.validate()
    }

    /// Number of children sampled at expansion.
    pub fn kappa(&self, selector: SelectorKind) -> usize {
        match selector {
            // small epsilon so that e.g. 0.6 * 5 floors to 3, not 2
            SelectorKind::Linuct => (self.zeta * self.chi as f64 + 1e-9).floor() as usize,
            _ => self.chi,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub action: JointAction,
    pub prior: f64,
    pub visits: u64,
    /// Sum of all returns backed up through this edge; `Q = value_sum / visits`.
    pub value_sum: f64,
    pub child: Option<usize>,
}

impl Edge {
    pub fn q(&self) -> f64 {
        if self.visits == 0 {
            0.0
        } else {
            self.value_sum / self.visits as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct SearchNode<S> {
    pub state: S,
    pub depth: usize,
    pub terminal: bool,
    pub edges: Vec<Edge>,
    /// `sum_a N(s, a)`.
    pub visits: u64,
    /// Number of simulations that reached this node.
    pub arrivals: u64,
    pub expanded: bool,
    pub design: Option<DesignState>,
}

impl<S> SearchNode<S> {
    fn new(state: S, depth: usize, terminal: bool) -> Self {
        Self {
            state,
            depth,
            terminal,
            edges: Vec::new(),
            visits: 0,
            arrivals: 0,
            expanded: false,
            design: None,
        }
    }

    pub fn edge(&self, action: &JointAction) -> Option<&Edge> {
        self.edges.iter().find(|e| &e.action == action)
    }
}

/// Arena of nodes; index 0 is the root.
#[derive(Debug, Clone)]
pub struct Tree<S> {
    pub nodes: Vec<SearchNode<S>>,
}

impl<S> Tree<S> {
    pub fn root(&self) -> &SearchNode<S> {
        &self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: usize,
    pub edge: usize,
    pub action: JointAction,
    pub reward: f64,
    pub depth: usize,
}

/// One root-to-leaf simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackupRecord {
    pub path: Vec<PathStep>,
    pub leaf_value: f64,
}

impl BackupRecord {
    pub fn search_depth(&self) -> usize {
        self.path.len()
    }

    /// Discounted return from each step of the path to the leaf, computed
    /// leaf-to-root exactly as back-propagation does.
    pub fn returns(&self, gamma: f64) -> Vec<f64> {
        let mut g = self.leaf_value;
        let mut out = vec![0.0; self.path.len()];
        for (k, step) in self.path.iter().enumerate().rev() {
            g = step.reward + gamma * g;
            out[k] = g;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationLog {
    pub simulation: usize,
    pub root_action: String,
    pub depth: usize,
    pub root_reward: f64,
    pub root_return: f64,
    pub leaf_value: f64,
    pub root_children: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildSummary {
    pub action: String,
    pub visits: u64,
    pub q: f64,
    pub prior: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub selector: SelectorKind,
    pub chosen: String,
    pub nodes: usize,
    pub simulations: Vec<SimulationLog>,
    pub root: Vec<ChildSummary>,
}

impl SearchStats {
    /// One JSON object per simulation, then one per root child.
    pub fn write_jsonl<W: Write>(&self, out: &mut W) -> Result<()> {
        let io = |e: std::io::Error| Error::Config(format!("write failed: {e}"));
        for sim in &self.simulations {
            let line = serde_json::to_string(sim).expect("record serializes");
            writeln!(out, "{line}").map_err(io)?;
        }
        Ok(())
    }

    pub fn read_simulations<R: BufRead>(input: R) -> Result<Vec<SimulationLog>> {
        input
            .lines()
            .map(|line| {
                let line = line.map_err(|e| Error::Config(format!("read failed: {e}")))?;
                serde_json::from_str(&line).map_err(|e| Error::Config(e.to_string()))
            })
            .collect()
    }
}

pub struct PlanOutcome<S> {
    pub action: JointAction,
    pub tree: Tree<S>,
    pub records: Vec<BackupRecord>,
    pub stats: SearchStats,
}

impl<S> PlanOutcome<S> {
    /// Estimated coefficients of the root bandit after the search.
    pub fn root_theta(&self) -> Option<&[f64]> {
        self.tree.root().design.as_ref().map(|d| d.theta())
    }
}

/// Runs searches with one selection rule. The planner's own random stream
/// drives expansion sampling and the random selector; reward noise belongs
/// to the model.
#[derive(Debug, Clone)]
pub struct Planner {
    config: SearchConfig,
    selector: SelectorKind,
    priors: Option<AgentPriors>,
    root_prior_mean: Option<Vec<f64>>,
    rng: ChaCha8Rng,
}

impl Planner {
    pub fn new(config: SearchConfig, selector: SelectorKind, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            selector,
            priors: None,
            root_prior_mean: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    pub fn selector(&self) -> SelectorKind {
        self.selector
    }

    /// Externally supplied per-agent priors, used at every node. Without
    /// them every agent is uniform.
    pub fn set_priors(&mut self, priors: Option<AgentPriors>) {
        self.priors = priors;
    }

    /// Prior mean for the root bandit's coefficients (warm start).
    pub fn set_root_prior_mean(&mut self, theta0: Option<Vec<f64>>) {
        self.root_prior_mean = theta0;
    }

    pub fn plan<M: Model>(&mut self, root_state: M::State, model: &mut M) -> Result<PlanOutcome<M::State>> {
        let n = model.agents();
        let d = model.actions_per_agent();
        if n == 0 || d == 0 {
            return Err(Error::Config("model has an empty action space".into()));
        }
        let priors = match &self.priors {
            Some(p) if p.agents() != n || p.actions_per_agent() != d => {
                return Err(Error::Config("prior shape does not match the model".into()))
            }
            Some(p) => p.clone(),
            None => AgentPriors::uniform(n, d),
        };
        let terminal = model.is_terminal(&root_state);
        if terminal {
            return Err(Error::Contract("cannot plan from a terminal state".into()));
        }
        let mut search = Search {
            config: &self.config,
            selector: self.selector,
            priors: &priors,
            rng: &mut self.rng,
            n,
            d,
            tree: Tree {
                nodes: vec![SearchNode::new(root_state, 0, false)],
            },
            q_bounds: None,
        };
        search.expand(0, self.root_prior_mean.as_deref())?;

        let mut records = Vec::with_capacity(self.config.num_simulations);
        let mut logs = Vec::with_capacity(self.config.num_simulations);
        for sim in 0..self.config.num_simulations {
            let record = search.simulate(model)?;
            search.backpropagate(&record)?;
            let returns = record.returns(self.config.gamma);
            let first = &record.path[0];
            logs.push(SimulationLog {
                simulation: sim,
                root_action: first.action.to_string(),
                depth: record.search_depth(),
                root_reward: first.reward,
                root_return: returns[0],
                leaf_value: record.leaf_value,
                root_children: search.tree.root().edges.len(),
            });
            records.push(record);
        }

        let tree = search.tree;
        let root = tree.root();
        let action = root
            .edges
            .iter()
            .max_by(|a, b| {
                a.visits
                    .cmp(&b.visits)
                    .then(a.q().total_cmp(&b.q()))
                    .then(b.action.cmp(&a.action))
            })
            .map(|e| e.action.clone())
            .ok_or_else(|| Error::Contract("root has no children".into()))?;
        let stats = SearchStats {
            selector: self.selector,
            chosen: action.to_string(),
            nodes: tree.len(),
            simulations: logs,
            root: root
                .edges
                .iter()
                .map(|e| ChildSummary {
                    action: e.action.to_string(),
                    visits: e.visits,
                    q: e.q(),
                    prior: e.prior,
                })
                .collect(),
        };
        Ok(PlanOutcome {
            action,
            tree,
            records,
            stats,
        })
    }
}

struct Search<'a, S> {
    config: &'a SearchConfig,
    selector: SelectorKind,
    priors: &'a AgentPriors,
    rng: &'a mut ChaCha8Rng,
    n: usize,
    d: usize,
    tree: Tree<S>,
    q_bounds: Option<(f64, f64)>,
}

impl<S: Clone> Search<'_, S> {
    fn simulate<M: Model<State = S>>(&mut self, model: &mut M) -> Result<BackupRecord> {
        let mut path = Vec::new();
        let mut node = 0;
        let leaf_value = loop {
            if self.tree.nodes[node].terminal {
                break 0.0;
            }
            if !self.tree.nodes[node].expanded {
                self.expand(node, None)?;
                break model.leaf_value(&self.tree.nodes[node].state)?;
            }
            let edge = self.select(node)?;
            self.tree.nodes[node].arrivals += 1;
            let action = self.tree.nodes[node].edges[edge].action.clone();
            let (reward, next) = model.step(&self.tree.nodes[node].state, &action)?;
            if !reward.is_finite() {
                return Err(Error::Model(format!("model returned reward {reward}")));
            }
            let depth = self.tree.nodes[node].depth;
            path.push(PathStep {
                node,
                edge,
                action,
                reward,
                depth,
            });
            node = match self.tree.nodes[node].edges[edge].child {
                Some(child) => child,
                None => {
                    let terminal = model.is_terminal(&next);
                    let child = self.tree.nodes.len();
                    self.tree.nodes.push(SearchNode::new(next, depth + 1, terminal));
                    self.tree.nodes[node].edges[edge].child = Some(child);
                    child
                }
            };
        };
        Ok(BackupRecord { path, leaf_value })
    }

    /// Samples the initial children of a newly reached node from the prior:
    /// each agent draws independently and duplicates are discarded.
    fn expand(&mut self, node: usize, prior_mean: Option<&[f64]>) -> Result<()> {
        let (n, d) = (self.n, self.d);
        if self.selector == SelectorKind::Linuct {
            let mut design = DesignState::new(n, d, &self.config.design)?;
            if let Some(theta0) = prior_mean {
                design = design.with_prior_mean(theta0)?;
            }
            self.tree.nodes[node].design = Some(design);
        }
        let feasible = joint_space_size(n, d);
        let target = (self.config.kappa(self.selector) as u128).min(feasible) as usize;
        let mut sampled: Vec<JointAction> = Vec::with_capacity(target);
        let mut attempts = 0;
        while sampled.len() < target && attempts < 1000 * target.max(1) {
            attempts += 1;
            let indices = (0..n)
                .map(|agent| sample_index(self.priors.agent(agent), self.rng))
                .collect();
            let action = JointAction::new(d, indices)?;
            if !sampled.contains(&action) {
                sampled.push(action);
            }
        }
        for action in sampled {
            self.add_child(node, action)?;
        }
        self.tree.nodes[node].expanded = true;
        Ok(())
    }

    fn add_child(&mut self, node: usize, action: JointAction) -> Result<usize> {
        let prior = self.priors.prob(&action);
        let n = &mut self.tree.nodes[node];
        if let Some(design) = n.design.as_mut() {
            design.register(&action)?;
        }
        n.edges.push(Edge {
            action,
            prior,
            visits: 0,
            value_sum: 0.0,
            child: None,
        });
        Ok(n.edges.len() - 1)
    }

    fn select(&mut self, node: usize) -> Result<usize> {
        let chi = self.config.chi;
        let n = &self.tree.nodes[node];
        if !n.expanded {
            return Err(Error::Contract("select on a node that was never expanded".into()));
        }
        let c = self.config.c_fn.value(n.visits);
        match self.selector {
            SelectorKind::Linuct => {
                // Generation starts from the node's second arrival, so the
                // children sampled at expansion are tried first.
                if n.edges.len() < chi && (n.arrivals > 0 || n.edges.is_empty()) {
                    return self.dynamic_node_generation(node, c);
                }
                let design = n.design.as_ref().expect("bandit nodes carry a design");
                let mut scored = Vec::with_capacity(n.edges.len());
                for e in &n.edges {
                    scored.push(design.ucb_score(&e.action, e.prior, c)?);
                }
                Ok(argmax(&n.edges, &scored))
            }
            SelectorKind::Puct => {
                let prior_total: f64 = n.edges.iter().map(|e| e.prior).sum();
                let scored: Vec<f64> = n
                    .edges
                    .iter()
                    .map(|e| {
                        let q = self.normalized(e);
                        let p = if prior_total > 0.0 {
                            e.prior / prior_total
                        } else {
                            1.0 / n.edges.len() as f64
                        };
                        puct_score(q, p, e.visits, n.visits, c)
                    })
                    .collect();
                Ok(argmax(&n.edges, &scored))
            }
            SelectorKind::FlatUcb => {
                let scored: Vec<f64> = n
                    .edges
                    .iter()
                    .map(|e| flat_ucb_score(e.q(), e.visits, n.visits))
                    .collect();
                Ok(argmax(&n.edges, &scored))
            }
            SelectorKind::Random => Ok(self.rng.random_range(0..n.edges.len())),
        }
    }

    fn dynamic_node_generation(&mut self, node: usize, c: f64) -> Result<usize> {
        let n = &self.tree.nodes[node];
        if n.edges.len() >= self.config.chi {
            return Err(Error::Contract("node generation at child capacity".into()));
        }
        let design = n.design.as_ref().expect("bandit nodes carry a design");
        let objective = SelectionObjective::new(design, self.priors, Exploration::Practical { c });
        let action = greedy_select(&objective, &full_blocks(self.n, self.d))?;
        match n.edges.iter().position(|e| e.action == action) {
            Some(existing) => Ok(existing),
            None => self.add_child(node, action),
        }
    }

    fn normalized(&self, edge: &Edge) -> f64 {
        let q = edge.q();
        match (self.config.normalize_q, self.q_bounds) {
            (true, Some((lo, hi))) if hi > lo && edge.visits > 0 => (q - lo) / (hi - lo),
            (true, _) => 0.0,
            (false, _) => q,
        }
    }

    fn backpropagate(&mut self, record: &BackupRecord) -> Result<()> {
        if record.path.is_empty() {
            return Err(Error::Contract("empty backup path".into()));
        }
        let loss = self.config.loss;
        let returns = record.returns(self.config.gamma);
        for (step, &g) in record.path.iter().zip(&returns).rev() {
            let node = &mut self.tree.nodes[step.node];
            let edge = &mut node.edges[step.edge];
            // Rewards above the current estimate get the larger curvature.
            let weight = if step.reward > edge.q() {
                loss.curvature_under
            } else {
                loss.curvature_over
            };
            edge.value_sum += g;
            edge.visits += 1;
            let q = edge.q();
            node.visits += 1;
            if let Some(design) = node.design.as_mut() {
                design.update(&step.action, step.reward, weight)?;
            }
            self.q_bounds = Some(match self.q_bounds {
                None => (q, q),
                Some((lo, hi)) => (lo.min(q), hi.max(q)),
            });
        }
        Ok(())
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Index of the highest score; ties go to the lexicographically smallest
/// action.
fn argmax(edges: &[Edge], scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..edges.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best] && edges[i].action < edges[best].action);
        if better {
            best = i;
        }
    }
    best
}
