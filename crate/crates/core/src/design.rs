//! Weighted regularized least squares over n-hot actions.
//!
//! The design matrix `V_t = lambda I + sum_s w_s A_s A_s^T` is never stored
//! for large problems. Instead the state keeps `V_t^{-1} a` for a set of
//! registered candidate actions and refreshes each of them with a rank-one
//! Sherman-Morrison correction per observation, which costs `O(nd)` per
//! candidate. Small problems (`nd <= dense_limit`) additionally keep the full
//! inverse so arbitrary actions can be scored; larger ones fall back to
//! replaying the stored rank-one factors.

use std::borrow::Cow;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::JointAction;
use crate::error::{Error, Result};

/// Guard on the Sherman-Morrison denominator `1 + w a^T V^{-1} a`, which is
/// at least one for a positive-definite design.
const DENOMINATOR_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    /// Ridge constant `lambda`.
    pub lambda: f64,
    /// Largest `nd` for which the dense inverse is maintained.
    pub dense_limit: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            dense_limit: 64,
        }
    }
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::Config(format!("lambda must be positive, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// What an update saw before applying itself; enough to advance the
/// log-determinant by the matrix determinant lemma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub weight: f64,
    /// `A^T V_{t-1}^{-1} A` before the update.
    pub prior_quad: f64,
    /// `X - <theta_{t-1}, A>` before the update.
    pub residual: f64,
}

impl UpdateStats {
    /// `ln det V_t - ln det V_{t-1}`.
    pub fn log_det_increment(&self) -> f64 {
        (self.weight * self.prior_quad).ln_1p()
    }
}

#[derive(Debug, Clone)]
struct RankOne {
    u: Vec<f64>,
    coef: f64,
}

#[derive(Debug, Clone)]
pub struct DesignState {
    agents: usize,
    actions_per_agent: usize,
    lambda: f64,
    theta: Vec<f64>,
    accum: Vec<f64>,
    cache: BTreeMap<JointAction, Vec<f64>>,
    dense_inv: Option<Vec<f64>>,
    history: Vec<RankOne>,
    trace: f64,
    weight_sum: f64,
    updates: u64,
}

impl DesignState {
    pub fn new(agents: usize, actions_per_agent: usize, config: &DesignConfig) -> Result<Self> {
        config.validate()?;
        if agents == 0 || actions_per_agent == 0 {
            return Err(Error::Config("design needs at least one agent and one action".into()));
        }
        let dim = agents * actions_per_agent;
        let lambda = config.lambda;
        let dense_inv = (dim <= config.dense_limit).then(|| {
            let mut m = vec![0.0; dim * dim];
            for i in 0..dim {
                m[i * dim + i] = 1.0 / lambda;
            }
            m
        });
        Ok(Self {
            agents,
            actions_per_agent,
            lambda,
            theta: vec![0.0; dim],
            accum: vec![0.0; dim],
            cache: BTreeMap::new(),
            dense_inv,
            history: Vec::new(),
            trace: dim as f64 * lambda,
            weight_sum: 0.0,
            updates: 0,
        })
    }

    /// Starts the estimate at `theta0` instead of zero, i.e. ridge-regularizes
    /// towards `theta0`. Only allowed before the first update.
    pub fn with_prior_mean(mut self, theta0: &[f64]) -> Result<Self> {
        if self.updates > 0 {
            return Err(Error::Contract("prior mean must be set before any update".into()));
        }
        if theta0.len() != self.dim() || theta0.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("prior mean has wrong length or non-finite entries".into()));
        }
        self.theta = theta0.to_vec();
        self.accum = theta0.iter().map(|x| self.lambda * x).collect();
        Ok(self)
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn actions_per_agent(&self) -> usize {
        self.actions_per_agent
    }

    pub fn dim(&self) -> usize {
        self.agents * self.actions_per_agent
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Current estimate `theta_hat`.
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    /// `M_t = lambda theta0 + sum_s w_s A_s X_s`.
    pub fn accumulator(&self) -> &[f64] {
        &self.accum
    }

    /// `trace(V_t)`, maintained exactly as `nd lambda + n sum_s w_s`.
    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn weight_sum(&self) -> f64 {
        self.weight_sum
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    pub fn has_dense_inverse(&self) -> bool {
        self.dense_inv.is_some()
    }

    pub fn is_registered(&self, action: &JointAction) -> bool {
        self.cache.contains_key(action)
    }

    pub fn registered(&self) -> impl Iterator<Item = (&JointAction, &[f64])> {
        self.cache.iter().map(|(a, v)| (a, v.as_slice()))
    }

    /// Adds `action` to the cache of maintained `V^{-1} a` products.
    pub fn register(&mut self, action: &JointAction) -> Result<()> {
        action.check_shape(self.agents, self.actions_per_agent)?;
        if !self.cache.contains_key(action) {
            let v = self.solve_uncached(action);
            self.cache.insert(action.clone(), v);
        }
        Ok(())
    }

    pub fn unregister(&mut self, action: &JointAction) {
        self.cache.remove(action);
    }

    /// `V_t^{-1} a`, served from the cache when possible.
    pub fn vinv_times(&self, action: &JointAction) -> Result<Cow<'_, [f64]>> {
        action.check_shape(self.agents, self.actions_per_agent)?;
        if let Some(v) = self.cache.get(action) {
            return Ok(Cow::Borrowed(v));
        }
        Ok(Cow::Owned(self.solve_uncached(action)))
    }

    /// `a^T V_t^{-1} a`, the squared confidence width of `action`.
    pub fn quad(&self, action: &JointAction) -> Result<f64> {
        Ok(action.dot(&self.vinv_times(action)?))
    }

    /// Like [`quad`](Self::quad) but refuses actions that would need a
    /// rebuild (not cached and no dense inverse).
    pub fn cached_quad(&self, action: &JointAction) -> Result<f64> {
        if let Some(v) = self.cache.get(action) {
            return Ok(action.dot(v));
        }
        if let Some(inv) = &self.dense_inv {
            action.check_shape(self.agents, self.actions_per_agent)?;
            let dim = self.dim();
            return Ok(action
                .coords()
                .map(|i| action.coords().map(|j| inv[i * dim + j]).sum::<f64>())
                .sum());
        }
        Err(Error::NotRegistered(action.to_string()))
    }

    /// Estimated mean reward `<theta_hat, a>`.
    pub fn predict(&self, action: &JointAction) -> f64 {
        action.dot(&self.theta)
    }

    /// Row-major `V_t^{-1}`; rebuilt from the rank-one history when the dense
    /// inverse is not maintained.
    pub fn inverse(&self) -> Cow<'_, [f64]> {
        if let Some(inv) = &self.dense_inv {
            return Cow::Borrowed(inv);
        }
        let dim = self.dim();
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = 1.0 / self.lambda;
        }
        for r in &self.history {
            for i in 0..dim {
                let s = r.coef * r.u[i];
                if s != 0.0 {
                    let row = &mut m[i * dim..(i + 1) * dim];
                    for (x, &uj) in row.iter_mut().zip(&r.u) {
                        *x -= s * uj;
                    }
                }
            }
        }
        Cow::Owned(m)
    }

    /// Row-major `V_t` itself, recovered by inverting `V_t^{-1}`.
    pub fn design_matrix(&self) -> Result<Vec<f64>> {
        crate::linalg::Cholesky::factor(&self.inverse(), self.dim()).map(|c| c.inverse())
    }

    fn solve_uncached(&self, action: &JointAction) -> Vec<f64> {
        let dim = self.dim();
        if let Some(inv) = &self.dense_inv {
            let mut out = vec![0.0; dim];
            for c in action.coords() {
                // V^{-1} is symmetric, so row c equals column c
                for (o, &x) in out.iter_mut().zip(&inv[c * dim..(c + 1) * dim]) {
                    *o += x;
                }
            }
            return out;
        }
        let mut out = action.encode();
        for x in out.iter_mut() {
            *x /= self.lambda;
        }
        for r in &self.history {
            let proj = action.dot(&r.u);
            if proj != 0.0 {
                let s = r.coef * proj;
                for (o, &ui) in out.iter_mut().zip(&r.u) {
                    *o -= s * ui;
                }
            }
        }
        out
    }

    /// Folds one weighted observation `(action, reward, weight)` into the
    /// estimate and every cached product.
    pub fn update(&mut self, action: &JointAction, reward: f64, weight: f64) -> Result<UpdateStats> {
        if !reward.is_finite() {
            return Err(Error::Numeric(format!("reward must be finite, got {reward}")));
        }
        if !weight.is_finite() || weight <= 0.0 {
            return Err(Error::Numeric(format!("weight must be positive, got {weight}")));
        }
        let u = self.vinv_times(action)?.into_owned();
        let quad = action.dot(&u);
        let denom = 1.0 + weight * quad;
        if denom < 1.0 - DENOMINATOR_SLACK {
            return Err(Error::Numeric(format!(
                "design lost positive definiteness (denominator {denom})"
            )));
        }
        let coef = weight / denom;
        let residual = reward - action.dot(&self.theta);

        // theta_{t+1} = theta_t + V_t^{-1} A w (X - <theta_t, A>) / (1 + w A^T V_t^{-1} A)
        let step = coef * residual;
        for (t, &ui) in self.theta.iter_mut().zip(&u) {
            *t += step * ui;
        }
        for (cand, v) in self.cache.iter_mut() {
            let s = coef * cand.dot(&u);
            if s != 0.0 {
                for (x, &ui) in v.iter_mut().zip(&u) {
                    *x -= s * ui;
                }
            }
        }
        let dim = self.dim();
        if let Some(inv) = self.dense_inv.as_mut() {
            for i in 0..dim {
                let s = coef * u[i];
                if s != 0.0 {
                    for (x, &uj) in inv[i * dim..(i + 1) * dim].iter_mut().zip(&u) {
                        *x -= s * uj;
                    }
                }
            }
        } else {
            self.history.push(RankOne { u, coef });
        }
        for c in action.coords() {
            self.accum[c] += weight * reward;
        }
        self.trace += weight * self.agents as f64;
        self.weight_sum += weight;
        self.updates += 1;
        Ok(UpdateStats {
            weight,
            prior_quad: quad,
            residual,
        })
    }

    /// Practical exploration score
    /// `a^T theta + c * prior * trace(V) * sqrt(a^T V^{-1} a)`.
    pub fn ucb_score(&self, action: &JointAction, prior: f64, c: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&prior) {
            return Err(Error::Config(format!("prior must be a probability, got {prior}")));
        }
        let width = self.cached_quad(action)?.max(0.0).sqrt();
        Ok(self.predict(action) + c * prior * self.trace * width)
    }

    /// Confidence-ellipsoid score `a^T theta + beta * ||a||_{V^{-1}}`.
    pub fn confidence_score(&self, action: &JointAction, beta: f64) -> Result<f64> {
        let width = self.cached_quad(action)?.max(0.0).sqrt();
        Ok(self.predict(action) + beta * width)
    }
}

/// Confidence radius schedule
/// `beta_t = sqrt(2 mu ln(det(V_t)^{1/2} / (det(lambda I)^{1/2} delta))) + sqrt(lambda) S`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSchedule {
    delta: f64,
    norm_bound: f64,
    mu: f64,
    lambda: f64,
    log_det_ratio: f64,
}

impl BetaSchedule {
    pub fn new(delta: f64, norm_bound: f64, mu: f64, lambda: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
        }
        if !norm_bound.is_finite() || norm_bound < 0.0 {
            return Err(Error::Config(format!("norm bound must be non-negative, got {norm_bound}")));
        }
        if !mu.is_finite() || mu <= 0.0 || !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::Config("mu and lambda must be positive".into()));
        }
        Ok(Self {
            delta,
            norm_bound,
            mu,
            lambda,
            log_det_ratio: 0.0,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `ln det V_t - ln det(lambda I)`.
    pub fn log_det_ratio(&self) -> f64 {
        self.log_det_ratio
    }

    pub fn record(&mut self, stats: &UpdateStats) {
        self.log_det_ratio += stats.log_det_increment();
    }

    /// Radius for the current log-determinant.
    pub fn beta(&self) -> f64 {
        self.beta_at(self.log_det_ratio)
    }

    pub fn beta_at(&self, log_det_ratio: f64) -> f64 {
        let inner = 0.5 * log_det_ratio + (1.0 / self.delta).ln();
        (2.0 * self.mu * inner.max(0.0)).sqrt() + self.lambda.sqrt() * self.norm_bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(d: usize, idx: &[usize]) -> JointAction {
        JointAction::new(d, idx.to_vec()).unwrap()
    }

    fn cfg(lambda: f64, dense_limit: usize) -> DesignConfig {
        DesignConfig { lambda, dense_limit }
    }

    #[test]
    fn fresh_state() {
        let mut s = DesignState::new(2, 3, &cfg(0.5, 0)).unwrap();
        let a = act(3, &[1, 2]);
        s.register(&a).unwrap();
        let v = s.vinv_times(&a).unwrap();
        let expected: Vec<f64> = a.encode().iter().map(|x| x / 0.5).collect();
        assert_eq!(v.as_ref(), expected.as_slice());
        assert_eq!(s.theta(), &[0.0; 6]);
        assert_eq!(s.trace(), 3.0);
    }

    #[test]
    fn single_update_matches_closed_form() {
        // n = 2, d = 1: A = (1, 1), V = I + A A^T, theta = V^{-1} A X
        let mut s = DesignState::new(2, 1, &cfg(1.0, 0)).unwrap();
        let a = act(1, &[0, 0]);
        s.update(&a, 1.0, 1.0).unwrap();
        // (I + 11^T)^{-1} 1 = 1 / 3
        for &t in s.theta() {
            assert!((t - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(s.trace(), 2.0 + 2.0);
    }

    #[test]
    fn trace_law() {
        let mut s = DesignState::new(3, 2, &cfg(1e-4, 64)).unwrap();
        let a = act(2, &[1, 0, 1]);
        s.update(&a, 2.0, 0.75).unwrap();
        s.update(&a, -1.0, 1.0).unwrap();
        assert!((s.trace() - (6.0 * 1e-4 + 3.0 * 1.75)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut s = DesignState::new(2, 2, &DesignConfig::default()).unwrap();
        let a = act(2, &[0, 1]);
        assert!(matches!(s.update(&a, f64::NAN, 1.0), Err(Error::Numeric(_))));
        assert!(matches!(s.update(&a, 1.0, 0.0), Err(Error::Numeric(_))));
        assert!(s.update(&act(3, &[0, 1]), 1.0, 1.0).is_err());
    }

    #[test]
    fn fresh_ucb_is_pure_exploration() {
        let s = DesignState::new(2, 2, &cfg(1.0, 64)).unwrap();
        let a = act(2, &[0, 1]);
        let score = s.ucb_score(&a, 0.25, 1.0).unwrap();
        assert!((score - 0.25 * 4.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn uncached_without_dense_is_refused_for_scoring() {
        let s = DesignState::new(2, 2, &cfg(1.0, 0)).unwrap();
        let a = act(2, &[0, 1]);
        assert!(matches!(s.ucb_score(&a, 0.5, 1.0), Err(Error::NotRegistered(_))));
    }

    #[test]
    fn prior_mean_is_kept_off_span() {
        let s = DesignState::new(2, 2, &cfg(1e-3, 64)).unwrap();
        let mut s = s.with_prior_mean(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        s.update(&act(2, &[0, 0]), 4.0, 1.0).unwrap();
        // coordinates outside the observed action keep their prior values
        assert!((s.theta()[1] - 2.0).abs() < 1e-12);
        assert!((s.theta()[3] - 4.0).abs() < 1e-12);
        assert!(s.with_prior_mean(&[0.0; 4]).is_err());
    }

    #[test]
    fn beta_at_zero() {
        let b = BetaSchedule::new(0.1, 2.0, 1.0, 0.25).unwrap();
        let expected = (2.0 * (10f64).ln()).sqrt() + 0.5 * 2.0;
        assert!((b.beta() - expected).abs() < 1e-15);
        assert!(BetaSchedule::new(1.0, 1.0, 1.0, 1.0).is_err());
        assert!(BetaSchedule::new(0.0, 1.0, 1.0, 1.0).is_err());
    }
}
