use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use linuct::select::DEFAULT_ENUMERATION_CAP;
use linuct::{joint_space_size, JointAction, MatGameSpec};
use linuct_bench::report::{quantile, write_summary, Metric};
use linuct_bench::{run, summarize, ExperimentConfig, HarnessError, OutputFormat, ResultFile};

#[derive(Parser)]
#[command(name = "linuct-bench", version, about = "Run and summarize LinUCT matrix-game experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (seed, selector) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Comma-separated seeds, overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output path, overriding the config.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<Format>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Mean and sd of cumulative return (or regret) per cell.
    Summarize {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "return")]
        metric: MetricArg,
        /// Write the table here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the optimal joint action of a game by enumeration.
    Oracle {
        env_spec: PathBuf,
        /// Also write the full mean-reward table as CSV.
        #[arg(long)]
        table: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum MetricArg {
    Return,
    Regret,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) | HarnessError::Core(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run {
            config,
            seeds,
            output,
            format,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(o) = output {
                cfg.output.path = o;
            }
            if let Some(f) = format {
                cfg.output.format = match f {
                    Format::Csv => OutputFormat::Csv,
                    Format::Jsonl => OutputFormat::Jsonl,
                };
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let (file, reports) = run(&cfg)?;
            let finals: Vec<f64> = reports.iter().map(|r| r.final_regret()).collect();
            println!(
                "{} records from {} runs -> {}",
                file.records.len(),
                reports.len(),
                cfg.output.path.display()
            );
            println!(
                "final cumulative regret: min {:.3}  median {:.3}  max {:.3}",
                quantile(&finals, 0.0),
                quantile(&finals, 0.5),
                quantile(&finals, 1.0)
            );
            Ok(())
        }
        Command::Summarize {
            results,
            metric,
            output,
        } => {
            let files = results
                .iter()
                .map(|p| ResultFile::read(p))
                .collect::<Result<Vec<_>, _>>()?;
            let metric = match metric {
                MetricArg::Return => Metric::Return,
                MetricArg::Regret => Metric::Regret,
            };
            let rows = summarize(&files, metric)?;
            match output {
                Some(p) => {
                    let f = File::create(&p)
                        .map_err(|e| HarnessError::io(format!("creating {}", p.display()), e))?;
                    write_summary(&rows, f)
                }
                None => write_summary(&rows, io::stdout().lock()),
            }
        }
        Command::Oracle { env_spec, table } => {
            let text = std::fs::read_to_string(&env_spec)
                .map_err(|e| HarnessError::io(format!("reading {}", env_spec.display()), e))?;
            let spec = MatGameSpec::from_config_str(&text)?;
            let (action, value) = brute_force_optimum(&spec)?;
            let mut out = io::stdout().lock();
            writeln!(out, "optimum {action} mean_reward {value}")
                .map_err(|e| HarnessError::io("writing stdout", e))?;
            if let Some(p) = table {
                let mut f = File::create(&p)
                    .map_err(|e| HarnessError::io(format!("creating {}", p.display()), e))?;
                spec.write_reward_table(&mut f, DEFAULT_ENUMERATION_CAP)?;
            }
            Ok(())
        }
    }
}

/// Enumerates every joint action; ties go to the lexicographically first.
fn brute_force_optimum(spec: &MatGameSpec) -> Result<(JointAction, f64), HarnessError> {
    let size = joint_space_size(spec.agents, spec.actions);
    if size > DEFAULT_ENUMERATION_CAP {
        return Err(linuct::Error::SearchSpaceTooLarge {
            size,
            cap: DEFAULT_ENUMERATION_CAP,
        }
        .into());
    }
    let mut best: Option<(JointAction, f64)> = None;
    for a in JointAction::enumerate(spec.agents, spec.actions) {
        let v = spec.mean_reward(&a)?;
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((a, v));
        }
    }
    Ok(best.expect("joint space is non-empty"))
}
