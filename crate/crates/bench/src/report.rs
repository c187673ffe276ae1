//! Regret analytics and cross-seed summaries.

use std::io::Write;

use linuct::{RewardMode, SelectorKind};
use serde::{Deserialize, Serialize};

use crate::records::{ResultFile, StepRecord};
use crate::{HarnessError, Result};

/// Regret bound for the linear bandit after `t` steps:
/// `sqrt(8 mu nd t beta_t ln((nd lambda + mu n t) / (nd lambda)))`.
pub fn bound_value(t: usize, agents: usize, actions_per_agent: usize, mu: f64, lambda: f64, beta: f64) -> f64 {
    let nd = (agents * actions_per_agent) as f64;
    let t = t as f64;
    let growth = ((nd * lambda + mu * agents as f64 * t) / (nd * lambda)).ln();
    (8.0 * mu * nd * t * beta * growth).sqrt()
}

/// Per-step regret trace of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretReport {
    pub selector: SelectorKind,
    pub seed: u64,
    pub regret: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub bound: Vec<Option<f64>>,
    pub beta: Vec<Option<f64>>,
    pub total_return: f64,
}

impl RegretReport {
    /// Builds the report from one cell's records (in step order).
    pub fn from_records(records: &[StepRecord]) -> Self {
        let first = records.first();
        let mut cumulative = Vec::with_capacity(records.len());
        let mut acc = 0.0;
        for r in records {
            acc += r.regret;
            cumulative.push(acc);
        }
        Self {
            selector: first.map_or(SelectorKind::Linuct, |r| r.selector),
            seed: first.map_or(0, |r| r.seed),
            regret: records.iter().map(|r| r.regret).collect(),
            cumulative,
            bound: records.iter().map(|r| r.bound).collect(),
            beta: records.iter().map(|r| r.beta).collect(),
            total_return: records.iter().map(|r| r.reward).sum(),
        }
    }

    pub fn final_regret(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Whether the cumulative regret stays at or below the bound at every
    /// step that has one.
    pub fn within_bound(&self) -> bool {
        self.cumulative
            .iter()
            .zip(&self.bound)
            .all(|(r, b)| b.is_none_or(|b| *r <= b))
    }
}

/// Linear-interpolated quantile of `values` (sorted internally).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "quantile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Return,
    Regret,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub agents: usize,
    pub actions: usize,
    pub mode: RewardMode,
    /// Decision steps per run.
    pub steps: usize,
    pub selector: SelectorKind,
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample sd of the per-seed cumulative metric for every
/// `(agents, actions, mode, steps, selector)` cell, in first-seen order.
pub fn summarize(files: &[ResultFile], metric: Metric) -> Result<Vec<SummaryRow>> {
    type Key = (usize, usize, RewardMode, usize, SelectorKind);
    let mut cells: Vec<(Key, Vec<f64>)> = Vec::new();
    for file in files {
        let c = &file.config;
        let mut per_run: Vec<((SelectorKind, u64), f64)> = Vec::new();
        for r in &file.records {
            let value = match metric {
                Metric::Return => r.reward,
                Metric::Regret => r.regret,
            };
            match per_run.iter_mut().find(|(k, _)| *k == (r.selector, r.seed)) {
                Some((_, total)) => *total += value,
                None => per_run.push(((r.selector, r.seed), value)),
            }
        }
        for ((selector, _), total) in per_run {
            let key = (c.env.agents, c.env.actions, c.env.mode, c.horizon, selector);
            match cells.iter_mut().find(|(k, _)| *k == key) {
                Some((_, v)) => v.push(total),
                None => cells.push((key, vec![total])),
            }
        }
    }
    if cells.is_empty() {
        return Err(HarnessError::Format("no records to summarize".into()));
    }
    Ok(cells
        .into_iter()
        .map(|((agents, actions, mode, steps, selector), values)| {
            let (mean, sd) = mean_sd(&values);
            SummaryRow {
                agents,
                actions,
                mode,
                steps,
                selector,
                mean,
                sd,
            }
        })
        .collect())
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Format(e.to_string()))?;
    }
    w.flush().map_err(|e| HarnessError::io("writing summary", e))
}
