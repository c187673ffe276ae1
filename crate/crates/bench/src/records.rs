//! Result files: a header echoing the full config, then one record per
//! decision step.
//!
//! CSV files carry the config as `# `-prefixed TOML lines; JSONL files carry
//! it as a `{"config": ...}` first line. Both parse back with [`ResultFile::read`].

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use linuct::SelectorKind;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, OutputFormat};
use crate::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub selector: SelectorKind,
    pub seed: u64,
    /// 1-based decision step.
    pub step: usize,
    /// Local action indices joined by `-`.
    pub action: String,
    pub reward: f64,
    pub regret: f64,
    pub cumulative_regret: f64,
    /// Confidence radius after the step (linear bandit only).
    pub beta: Option<f64>,
    /// Regret bound at this step (linear bandit only).
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultFile {
    pub config: ExperimentConfig,
    pub records: Vec<StepRecord>,
}

#[derive(Serialize, Deserialize)]
struct JsonHeader {
    config: ExperimentConfig,
}

impl ResultFile {
    pub fn write_to<W: Write>(&self, out: W, format: OutputFormat) -> Result<()> {
        let mut out = BufWriter::new(out);
        let io = |e| HarnessError::io("writing results", e);
        match format {
            OutputFormat::Csv => {
                for line in self.config.to_toml().lines() {
                    writeln!(out, "# {line}").map_err(io)?;
                }
                let mut w = csv::Writer::from_writer(&mut out);
                for r in &self.records {
                    w.serialize(r).map_err(|e| HarnessError::Format(e.to_string()))?;
                }
                w.flush().map_err(io)?;
            }
            OutputFormat::Jsonl => {
                let header = JsonHeader {
                    config: self.config.clone(),
                };
                let line = serde_json::to_string(&header).expect("config serializes");
                writeln!(out, "{line}").map_err(io)?;
                for r in &self.records {
                    let line = serde_json::to_string(r).expect("record serializes");
                    writeln!(out, "{line}").map_err(io)?;
                }
            }
        }
        out.flush().map_err(io)
    }

    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<()> {
        let file = File::create(path)
            .map_err(|e| HarnessError::io(format!("creating {}", path.display()), e))?;
        self.write_to(file, format)
    }

    /// Reads either format; JSONL is recognized by a leading `{`.
    pub fn read_from<R: BufRead>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input
            .read_to_string(&mut text)
            .map_err(|e| HarnessError::io("reading results", e))?;
        if text.starts_with('{') {
            Self::parse_jsonl(&text)
        } else {
            Self::parse_csv(&text)
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)
            .map_err(|e| HarnessError::io(format!("opening {}", path.display()), e))?;
        Self::read_from(BufReader::new(file))
    }

    fn parse_jsonl(text: &str) -> Result<Self> {
        let bad = |e: serde_json::Error| HarnessError::Format(e.to_string());
        let mut lines = text.lines();
        let header: JsonHeader = serde_json::from_str(lines.next().unwrap_or_default()).map_err(bad)?;
        let records = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(bad))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: header.config,
            records,
        })
    }

    fn parse_csv(text: &str) -> Result<Self> {
        let mut toml_text = String::new();
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.strip_prefix("# ").unwrap_or(&line[1..]);
            toml_text.push_str(body);
            toml_text.push('\n');
        }
        if toml_text.is_empty() {
            return Err(HarnessError::Format("missing config header".into()));
        }
        let config = ExperimentConfig::from_toml(&toml_text)?;
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let records = reader
            .deserialize()
            .map(|r| r.map_err(|e| HarnessError::Format(e.to_string())))
            .collect::<Result<_>>()?;
        Ok(Self { config, records })
    }
}
