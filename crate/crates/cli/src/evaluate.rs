//! `dysat evaluate`: the link-prediction protocol, with embeddings learned
//! end to end per run or read from an export directory.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dysat::evaluation::{evaluate, EvalError, EvalReport, Embedder, ValidationSet};
use dysat::graph::SnapshotSequence;
use dysat::numeric::Tensor;
use dysat::training::{DysatEmbedder, IncrementalEmbedder};

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::CliError;
use crate::export::{embedding_file, read_embeddings};

/// Precomputed per-step embeddings; the cutoff step's matrix is returned
/// regardless of the training snapshots, validation set or seed.
pub struct StoredEmbeddings {
    pub steps: Vec<Tensor>,
}

impl StoredEmbeddings {
    /// Reads `embeddings_0000.tsv`, `embeddings_0001.tsv`, ... until the
    /// first missing step.
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let mut steps = Vec::new();
        loop {
            let path = dir.join(embedding_file(steps.len()));
            if !path.is_file() {
                break;
            }
            steps.push(read_embeddings(&path)?);
        }
        if steps.is_empty() {
            return Err(CliError::Input {
                path: dir.to_path_buf(),
                msg: format!("no {} found", embedding_file(0)),
            });
        }
        Ok(Self { steps })
    }
}

impl Embedder for StoredEmbeddings {
    fn embed(
        &self,
        train: &SnapshotSequence,
        _validation: Option<&ValidationSet>,
        _seed: u64,
    ) -> Result<Tensor, EvalError> {
        self.steps.get(train.len() - 1).cloned().ok_or_else(|| {
            EvalError::Input(format!(
                "no stored embeddings for step {} ({} available)",
                train.len() - 1,
                self.steps.len()
            ))
        })
    }
}

#[derive(Debug)]
pub struct EvaluateOutput {
    pub report: EvalReport,
    pub json: PathBuf,
    pub runs_csv: PathBuf,
    pub steps_csv: PathBuf,
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let mut w = BufWriter::new(File::create(path).map_err(CliError::io(path))?);
    f(&mut w).and_then(|_| w.flush()).map_err(CliError::io(path))
}

pub fn run(cfg: &RunConfig, embeddings: Option<&Path>, out: &Path) -> Result<EvaluateOutput, CliError> {
    let data = Dataset::load(cfg)?;
    let mode = cfg.eval_mode();
    let embedder: Box<dyn Embedder> = match embeddings {
        Some(dir) => Box::new(StoredEmbeddings::load(dir)?),
        None if cfg.incremental => Box::new(IncrementalEmbedder {
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            features: Some(data.features.clone()),
        }),
        None => Box::new(DysatEmbedder {
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            features: Some(data.features.clone()),
        }),
    };
    let report = evaluate(&data.seq, embedder.as_ref(), mode, &cfg.eval).map_err(|e| match e {
        EvalError::Input(msg) => CliError::Usage(msg),
        e => CliError::runtime(e),
    })?;

    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let name = mode.name();
    let json = out.join(format!("report_{name}.json"));
    write_file(&json, |w| writeln!(w, "{}", report.to_json()))?;
    let runs_csv = out.join(format!("runs_{name}.csv"));
    write_file(&runs_csv, |w| report.write_runs_csv(w))?;
    let steps_csv = out.join(format!("steps_{name}.csv"));
    write_file(&steps_csv, |w| report.write_steps_csv(w))?;
    Ok(EvaluateOutput {
        report,
        json,
        runs_csv,
        steps_csv,
    })
}
