use std::path::{Path, PathBuf};

use linuct::{MatGameSpec, SearchConfig, SelectorKind};
use serde::{Deserialize, Serialize};

use crate::{HarnessError, Result};

/// How each decision is made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// One bandit agent learns across all decision steps.
    Bandit,
    /// A fresh search tree per decision, using the game as its model.
    Planning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: OutputFormat,
    /// Optional per-decision search statistics (JSONL), planning mode only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_stats: Option<PathBuf>,
}

fn default_format() -> OutputFormat {
    OutputFormat::Csv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub mode: RunMode,
    pub selectors: Vec<SelectorKind>,
    pub seeds: Vec<u64>,
    /// Decision steps per run.
    pub horizon: usize,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Confidence level for the linear bandit radius and the regret bound.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Bound on the payoff norm; defaults to the game's true norm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_bound: Option<f64>,
    /// Planning mode: seed each root bandit with the previous root estimate.
    #[serde(default)]
    pub warm_start: bool,
    /// Planning mode: search depth in decision steps.
    #[serde(default = "default_planning_horizon")]
    pub planning_horizon: usize,
    pub env: MatGameSpec,
    #[serde(default)]
    pub search: SearchConfig,
    pub output: OutputConfig,
}

fn default_workers() -> usize {
    1
}

fn default_delta() -> f64 {
    0.01
}

fn default_planning_horizon() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(HarnessError::Config(m));
        self.env.validate()?;
        self.search.validate()?;
        if self.selectors.is_empty() {
            return fail("at least one selector is required".into());
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.workers == 0 {
            return fail("workers must be at least 1".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return fail(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.planning_horizon == 0 {
            return fail("planning_horizon must be at least 1".into());
        }
        if let Some(s) = self.norm_bound {
            if !s.is_finite() || s < 0.0 {
                return fail(format!("norm_bound must be non-negative, got {s}"));
            }
        }
        if self.mode == RunMode::Bandit && self.selectors.contains(&SelectorKind::Puct) {
            return fail("puct is a tree selector; use mode = \"planning\"".into());
        }
        if self.mode == RunMode::Bandit && self.output.search_stats.is_some() {
            return fail("search_stats is only produced in planning mode".into());
        }
        Ok(())
    }

    /// `||theta*||` of the game, or the configured override.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound.unwrap_or_else(|| {
            self.env
                .payoff_weights()
                .iter()
                .map(|w| w * w)
                .sum::<f64>()
                .sqrt()
        })
    }
}
