//! Command-line front end: `train`, `evaluate`, `bench`, `export` and
//! `preprocess`.
//!
//! Commands that touch a dataset read a TOML run configuration
//! (`--config`), overlaid by `--set key=value` overrides and the dedicated
//! flags, and validated before any data is read. Outputs go to `--out`,
//! else `$DYSAT_OUTPUT_DIR`, else the config's `output_dir`, else
//! `dysat-out`.

pub mod bench;
pub mod config;
pub mod dataset;
mod error;
pub mod evaluate;
pub mod export;
pub mod preprocess;
pub mod train;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{ModeName, RunConfig, OUTPUT_DIR_ENV};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "dysat", version, about = "Dynamic graph self-attention: train, evaluate, benchmark, export")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    /// Drop the structural block; node features feed the temporal block.
    Structural,
    /// Drop the temporal block and position embeddings.
    Temporal,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set model.final_dim=64`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Seed for training and evaluation.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel parts.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Remove one attention block.
    #[arg(long, value_enum)]
    pub ablate: Option<Ablation>,
    /// Incremental training over stored structural outputs.
    #[arg(long)]
    pub incremental: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train on a prefix of the snapshots; writes a checkpoint and the loss history.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train on the first N snapshots.
        #[arg(long, value_name = "N")]
        upto: Option<usize>,
    },
    /// Run the link-prediction protocol; writes JSON and CSV reports.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeName>,
        /// Largest look-ahead for `--mode multi-step`.
        #[arg(long)]
        horizon: Option<usize>,
        /// Evaluate exported embeddings instead of training.
        #[arg(long, value_name = "DIR")]
        embeddings: Option<PathBuf>,
    },
    /// Time training and count temporal-attention flops per history window.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated history lengths.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        windows: Vec<usize>,
        /// Epochs timed per window.
        #[arg(long, default_value_t = 1)]
        epochs: usize,
    },
    /// Write per-step embeddings and attention weights of a checkpoint.
    Export {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<out>/checkpoint.bin`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Turn a `u v epoch` interaction log into a snapshot edge list.
    Preprocess {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        window_days: f64,
        /// Defaults to `<out>/edges.txt`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Id-to-name table; defaults to `<out>/nodes.tsv`.
        #[arg(long)]
        node_map: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl Common {
    /// Config file plus `--set` overrides plus the dedicated flags.
    pub fn load(&self, extra: &[String]) -> Result<RunConfig, CliError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        if let Some(t) = self.threads {
            overrides.push(format!("threads={t}"));
        }
        if self.incremental {
            overrides.push("incremental=true".into());
        }
        overrides.extend_from_slice(extra);
        let mut cfg = RunConfig::load(self.config.as_deref(), &overrides)?;
        match self.ablate {
            Some(Ablation::Structural) => cfg.model.structural_layers.clear(),
            Some(Ablation::Temporal) => cfg.model.temporal_layers.clear(),
            None => {}
        }
        Ok(cfg)
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(CliError::runtime)?
            .install(f),
    }
}

/// Runs one command, returning the lines to print on success.
pub fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::Train { common, upto } => {
            let cfg = common.load(&[])?;
            let out = cfg.output_dir(common.out.as_deref());
            let r = in_pool(cfg.threads, || train::run(&cfg, upto, &out))?;
            Ok(vec![
                format!("trained on {} snapshots, final epoch loss {}", r.steps, r.final_loss),
                format!("checkpoint: {}", r.checkpoint.display()),
                format!("history: {}", r.history.display()),
            ])
        }
        Command::Evaluate {
            common,
            mode,
            horizon,
            embeddings,
        } => {
            let mut extra = Vec::new();
            if let Some(m) = mode {
                let name = m.to_possible_value().expect("named variant");
                extra.push(format!("mode=\"{}\"", name.get_name()));
            }
            if let Some(h) = horizon {
                extra.push(format!("horizon={h}"));
            }
            let cfg = common.load(&extra)?;
            let out = cfg.output_dir(common.out.as_deref());
            let r = in_pool(cfg.threads, || evaluate::run(&cfg, embeddings.as_deref(), &out))?;
            let fmt = |v: Option<f64>, s: Option<f64>| match (v, s) {
                (Some(v), Some(s)) => format!("{v:.4} +- {s:.4}"),
                _ => "n/a".into(),
            };
            let mut lines = vec![
                format!(
                    "{}: micro AUC {}, macro AUC {} over {} runs",
                    r.report.mode,
                    fmt(r.report.micro_auc, r.report.micro_std),
                    fmt(r.report.macro_auc, r.report.macro_std),
                    r.report.runs
                ),
                format!("report: {}", r.json.display()),
            ];
            if !r.report.skipped.is_empty() {
                lines.push(format!("{} run/step pairs skipped (see report)", r.report.skipped.len()));
            }
            Ok(lines)
        }
        Command::Bench {
            common,
            windows,
            epochs,
        } => {
            let cfg = common.load(&[])?;
            let out = cfg.output_dir(common.out.as_deref());
            let (rows, path) = in_pool(cfg.threads, || bench::run(&cfg, &windows, epochs, &out))?;
            let mut lines: Vec<String> = rows
                .iter()
                .map(|r| {
                    format!(
                        "window {:>3}: {:.4} s/epoch, {} temporal-attention flops",
                        r.window, r.seconds_per_epoch, r.temporal_attention_flops
                    )
                })
                .collect();
            lines.push(format!("timings: {}", path.display()));
            Ok(lines)
        }
        Command::Export { common, checkpoint } => {
            let cfg = common.load(&[])?;
            let out = cfg.output_dir(common.out.as_deref());
            let checkpoint = checkpoint.unwrap_or_else(|| out.join(train::CHECKPOINT_FILE));
            let r = in_pool(cfg.threads, || export::run(&cfg, &checkpoint, &out))?;
            Ok(vec![
                format!("{} embedding files in {}", r.embeddings.len(), out.display()),
                format!("attention: {}, {}", r.structural.display(), r.temporal.display()),
            ])
        }
        Command::Preprocess {
            input,
            window_days,
            output,
            node_map,
            out,
        } => {
            let dir = RunConfig::default().output_dir(out.as_deref());
            let edges = output.unwrap_or_else(|| dir.join("edges.txt"));
            let nodes = node_map.unwrap_or_else(|| dir.join("nodes.tsv"));
            let p = preprocess::run(&input, window_days, &edges, &nodes)?;
            Ok(vec![
                format!(
                    "{} nodes, {} snapshots, {} weighted edges ({} self interactions dropped)",
                    p.nodes.len(),
                    p.num_steps,
                    p.edges.len(),
                    p.dropped_self_loops
                ),
                format!("edges: {}", edges.display()),
                format!("nodes: {}", nodes.display()),
            ])
        }
    }
}
