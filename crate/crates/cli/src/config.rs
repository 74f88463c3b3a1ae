//! Run configuration: a TOML key-value file whose sections mirror the
//! library configs, overlaid with `key=value` overrides using dotted keys
//! (`model.final_dim=64`, `train.sampler.window=5`). Every key is checked
//! against the known fields; unknown keys are rejected.

use std::path::{Path, PathBuf};

use dysat::evaluation::{EvalConfig, EvalMode};
use dysat::layers::ModelConfig;
use dysat::training::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

/// Environment variable that overrides the output directory.
pub const OUTPUT_DIR_ENV: &str = "DYSAT_OUTPUT_DIR";

const DEFAULT_OUTPUT_DIR: &str = "dysat-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    AllLinks,
    NewLinks,
    NewNodes,
    MultiStep,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// `t u v w` edge list.
    pub edges: Option<PathBuf>,
    /// Inferred from the edge list when absent.
    pub num_nodes: Option<usize>,
    /// Node feature TSV; one-hot identities when absent.
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, replaces both `train.seed` and `eval.seed`.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    /// Worker threads for parallel sampling and evaluation; all cores when
    /// absent.
    pub threads: Option<usize>,
    /// Use incremental training (one structural pass per new snapshot).
    pub incremental: bool,
    pub mode: ModeName,
    /// Largest look-ahead for the multi-step mode.
    pub horizon: usize,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: None,
            threads: None,
            incremental: false,
            mode: ModeName::AllLinks,
            horizon: 6,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` in order, resolves
    /// relative data paths against the config file's directory and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Input {
                    path: p.to_path_buf(),
                    msg: e.to_string(),
                })?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        if let Some(base) = path.and_then(Path::parent) {
            for p in [&mut cfg.data.edges, &mut cfg.data.features, &mut cfg.output_dir]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        cfg.resolve_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.train.seed = seed;
            self.eval.seed = seed;
        }
    }

    /// Checks every section; runs before any data is read.
    pub fn validate(&self) -> Result<(), CliError> {
        let config = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.model.validate().map_err(|e| config(&e))?;
        self.train.validate().map_err(|e| config(&e))?;
        self.eval.validate().map_err(|e| config(&e))?;
        if self.horizon == 0 {
            return Err(CliError::Config("horizon must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Config("threads must be at least 1".into()));
        }
        if self.data.num_nodes == Some(0) {
            return Err(CliError::Config("data.num_nodes must be positive".into()));
        }
        Ok(())
    }

    pub fn eval_mode(&self) -> EvalMode {
        match self.mode {
            ModeName::AllLinks => EvalMode::AllLinks,
            ModeName::NewLinks => EvalMode::NewLinks,
            ModeName::NewNodes => EvalMode::NewNodes,
            ModeName::MultiStep => EvalMode::MultiStep {
                delta: self.horizon,
            },
        }
    }

    /// Flag, then environment variable, then config file, then the default.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.output_dir
            .clone()
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}

/// Sets `a.b.c=value` in `table`. The value is read as a TOML literal when
/// it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{assignment}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("bad key `{key}`")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut current = table;
    for p in parents {
        let entry = current
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        current = match entry {
            Value::Table(t) => t,
            _ => return Err(CliError::Config(format!("`{p}` in `{key}` is not a section"))),
        };
    }
    current.insert(last.to_string(), value);
    Ok(())
}
