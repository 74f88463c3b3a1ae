//! `dysat train`: fits a model and writes its checkpoint and loss history.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use dysat::layers::save_checkpoint;
use dysat::seed::derive_seed;
use dysat::training::{fit, incremental_fit, write_history_csv, FitResult, RepresentationStore, TrainConfig};

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::CliError;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const HISTORY_FILE: &str = "history.csv";
pub const STORE_DIR: &str = "store";

#[derive(Debug)]
pub struct TrainOutput {
    pub checkpoint: PathBuf,
    pub history: PathBuf,
    pub steps: usize,
    pub final_loss: f64,
}

/// Trains on the first `upto` snapshots. In incremental mode each step
/// `t` is trained on its own snapshot with seed `derive(seed, t)` over the
/// structural outputs of the earlier steps, kept in `<out>/store`; the
/// checkpoint and history are those of the last step.
pub fn run(cfg: &RunConfig, upto: Option<usize>, out: &Path) -> Result<TrainOutput, CliError> {
    let data = Dataset::load(cfg)?;
    let seq = data.prefix(upto)?;
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;

    let result: FitResult = if cfg.incremental {
        let store_dir = out.join(STORE_DIR);
        if store_dir.exists() {
            std::fs::remove_dir_all(&store_dir).map_err(CliError::io(&store_dir))?;
        }
        let mut store = RepresentationStore::open(&store_dir).map_err(CliError::runtime)?;
        let mut last = None;
        for (t, snapshot) in seq.snapshots().iter().enumerate() {
            let step_cfg = TrainConfig {
                seed: derive_seed(cfg.train.seed, &[t as u64]),
                ..cfg.train.clone()
            };
            let r = incremental_fit(t, snapshot, &data.features, &mut store, &cfg.model, &step_cfg, None)
                .map_err(CliError::runtime)?;
            last = Some(r.fit);
        }
        last.expect("at least one snapshot")
    } else {
        fit(&seq, &data.features, &cfg.model, &cfg.train, None).map_err(CliError::runtime)?
    };

    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &cfg.model, &result.params).map_err(CliError::runtime)?;
    let history = out.join(HISTORY_FILE);
    let file = File::create(&history).map_err(CliError::io(&history))?;
    write_history_csv(BufWriter::new(file), &result.history).map_err(CliError::io(&history))?;
    Ok(TrainOutput {
        checkpoint,
        history,
        steps: seq.len(),
        final_loss: result.history.last().map_or(f64::NAN, |r| r.loss),
    })
}
