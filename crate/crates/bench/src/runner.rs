//! Executes `(seed, selector)` cells.
//!
//! Seeding: every cell derives independent ChaCha8 streams from
//! `(env.seed, run seed, stream tag)` with [`derive_seed`]. The environment
//! stream does not depend on the selector, so all selectors run against the
//! same noise sequence for a given seed (common random numbers). Because the
//! noise is additive and drawn once per step whatever the action, the
//! realized regret `X*_t - X_t` equals the gap in mean rewards.

use std::fs::File;
use std::io::{BufWriter, Write};

use linuct::bandit::{BanditAgent, FlatUcbBandit, LinUctBandit, RandomBandit};
use linuct::{MatGame, MatGameModel, MatGameSpec, Planner, SelectorKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, RunMode};
use crate::records::{ResultFile, StepRecord};
use crate::report::{bound_value, RegretReport};
use crate::{HarnessError, Result};

const ENV_STREAM: u64 = 1;
const AGENT_STREAM: u64 = 2;
const MODEL_STREAM: u64 = 3;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `stream` for run seed `seed` under base seed `base`.
pub fn derive_seed(base: u64, seed: u64, stream: u64) -> u64 {
    mix(mix(mix(base) ^ seed) ^ stream)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub selector: SelectorKind,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// One JSON line per decision (planning mode, when requested).
    pub search_stats: Vec<String>,
}

#[derive(Serialize)]
struct DecisionStats<'a> {
    selector: SelectorKind,
    seed: u64,
    step: usize,
    stats: &'a linuct::mcts::SearchStats,
}

/// Runs every cell and writes the configured output files. Output files are
/// created before the first simulation so unwritable paths fail early.
pub fn run(config: &ExperimentConfig) -> Result<(ResultFile, Vec<RegretReport>)> {
    config.validate()?;
    let path = &config.output.path;
    let out = File::create(path)
        .map_err(|e| HarnessError::io(format!("creating {}", path.display()), e))?;
    let stats_out = match &config.output.search_stats {
        Some(p) => Some(
            File::create(p).map_err(|e| HarnessError::io(format!("creating {}", p.display()), e))?,
        ),
        None => None,
    };

    let cells = run_cells(config)?;

    let records: Vec<StepRecord> = cells.iter().flat_map(|c| c.records.iter().cloned()).collect();
    let file = ResultFile {
        config: config.clone(),
        records,
    };
    file.write_to(out, config.output.format)?;
    if let Some(f) = stats_out {
        let mut w = BufWriter::new(f);
        let io = |e| HarnessError::io("writing search statistics", e);
        for line in cells.iter().flat_map(|c| &c.search_stats) {
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)?;
    }
    let reports = cells.iter().map(|c| RegretReport::from_records(&c.records)).collect();
    Ok((file, reports))
}

/// Runs all cells (seed-major, then selector in config order) on a pool of
/// `config.workers` threads; results come back in that order.
pub fn run_cells(config: &ExperimentConfig) -> Result<Vec<CellResult>> {
    let cells: Vec<(u64, SelectorKind)> = config
        .seeds
        .iter()
        .flat_map(|&s| config.selectors.iter().map(move |&k| (s, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    pool.install(|| {
        cells
            .par_iter()
            .map(|&(seed, selector)| run_cell(config, selector, seed))
            .collect()
    })
}

fn cell_spec(config: &ExperimentConfig, seed: u64) -> MatGameSpec {
    MatGameSpec {
        seed: derive_seed(config.env.seed, seed, ENV_STREAM),
        ..config.env.clone()
    }
}

pub fn run_cell(config: &ExperimentConfig, selector: SelectorKind, seed: u64) -> Result<CellResult> {
    let spec = cell_spec(config, seed);
    let agent_seed = derive_seed(config.env.seed, seed, AGENT_STREAM);
    match config.mode {
        RunMode::Bandit => run_bandit(config, &spec, selector, seed, agent_seed),
        RunMode::Planning => run_planning(config, &spec, selector, seed, agent_seed),
    }
}

fn run_bandit(
    config: &ExperimentConfig,
    spec: &MatGameSpec,
    selector: SelectorKind,
    seed: u64,
    agent_seed: u64,
) -> Result<CellResult> {
    let (n, d) = (spec.agents, spec.actions);
    let search = &config.search;
    let mut agent: Box<dyn BanditAgent> = match selector {
        SelectorKind::Linuct => Box::new(LinUctBandit::new(
            n,
            d,
            &search.design,
            search.loss,
            config.delta,
            config.norm_bound(),
        )?),
        SelectorKind::FlatUcb => Box::new(FlatUcbBandit::new(n, d)?),
        SelectorKind::Random => Box::new(RandomBandit::new(n, d, agent_seed)),
        SelectorKind::Puct => {
            return Err(HarnessError::Config("puct needs planning mode".into()));
        }
    };
    let mut game = MatGame::new(spec.clone())?;
    let optimum = spec.oracle_optimum().1;
    let mut records = Vec::with_capacity(config.horizon);
    let mut cumulative = 0.0;
    for step in 1..=config.horizon {
        if game.is_done() {
            game.reset();
        }
        let action = agent.choose()?;
        let (reward, _) = game.step(&action)?;
        agent.observe(&action, reward)?;
        let regret = optimum - spec.mean_reward(&action)?;
        cumulative += regret;
        let beta = agent.beta();
        let bound = beta.map(|b| bound_value(step, n, d, search.loss.mu(), search.design.lambda, b));
        records.push(StepRecord {
            selector,
            seed,
            step,
            action: action.to_string(),
            reward,
            regret,
            cumulative_regret: cumulative,
            beta,
            bound,
        });
    }
    Ok(CellResult {
        selector,
        seed,
        records,
        search_stats: Vec::new(),
    })
}

fn run_planning(
    config: &ExperimentConfig,
    spec: &MatGameSpec,
    selector: SelectorKind,
    seed: u64,
    agent_seed: u64,
) -> Result<CellResult> {
    let mut planner = Planner::new(config.search.clone(), selector, agent_seed)?;
    let mut model_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.env.seed, seed, MODEL_STREAM));
    let mut game = MatGame::new(spec.clone())?;
    let optimum = spec.oracle_optimum().1;
    let keep_stats = config.output.search_stats.is_some();
    let mut records = Vec::with_capacity(config.horizon);
    let mut search_stats = Vec::new();
    let mut carried: Option<Vec<f64>> = None;
    let mut cumulative = 0.0;
    for step in 1..=config.horizon {
        if game.is_done() {
            game.reset();
        }
        let horizon = config.planning_horizon.min(game.remaining());
        let mut model = MatGameModel::new(spec.clone(), horizon, model_rng)?;
        if config.warm_start {
            planner.set_root_prior_mean(carried.take());
        }
        let outcome = planner.plan(0, &mut model)?;
        model_rng = model.into_rng();
        if config.warm_start {
            carried = outcome.root_theta().map(<[f64]>::to_vec);
        }
        if keep_stats {
            let line = DecisionStats {
                selector,
                seed,
                step,
                stats: &outcome.stats,
            };
            search_stats.push(serde_json::to_string(&line).expect("stats serialize"));
        }
        let action = outcome.action;
        let (reward, _) = game.step(&action)?;
        let regret = optimum - spec.mean_reward(&action)?;
        cumulative += regret;
        records.push(StepRecord {
            selector,
            seed,
            step,
            action: action.to_string(),
            reward,
            regret,
            cumulative_regret: cumulative,
            beta: None,
            bound: None,
        });
    }
    Ok(CellResult {
        selector,
        seed,
        records,
        search_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_stream_and_seed() {
        let a = derive_seed(0, 1, ENV_STREAM);
        assert_ne!(a, derive_seed(0, 1, AGENT_STREAM));
        assert_ne!(a, derive_seed(0, 2, ENV_STREAM));
        assert_ne!(a, derive_seed(1, 1, ENV_STREAM));
        assert_eq!(a, derive_seed(0, 1, ENV_STREAM));
    }
}
