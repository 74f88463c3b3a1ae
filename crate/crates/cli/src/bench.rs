//! `dysat bench`: training cost against the length of the temporal
//! history.
//!
//! For each window `w` the model is trained on the last `w` snapshots and
//! two numbers are reported: wall-clock seconds per epoch, and the flops
//! spent in temporal attention by one forward pass. Temporal attention
//! costs `O(V w^2 D)`, so doubling `w` roughly quadruples the flop count;
//! the count is exact and machine independent, unlike the timings.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use dysat::layers::{attention_edges, forward, ForwardCtx, ForwardInput, ModelParams};
use dysat::numeric::Tape;
use dysat::seed::stream;
use dysat::training::{fit, TrainConfig};

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::CliError;

pub const BENCH_FILE: &str = "bench.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub window: usize,
    pub epochs: usize,
    pub seconds_per_epoch: f64,
    pub temporal_attention_flops: u64,
}

/// Temporal-attention flops of one evaluation-mode forward pass over the
/// last `window` snapshots, with freshly initialized weights.
pub fn temporal_flops(cfg: &RunConfig, data: &Dataset, window: usize) -> Result<u64, CliError> {
    let t = data.seq.len();
    let seq = data.seq.slice(t - window..t).map_err(CliError::runtime)?;
    let params = ModelParams::init(
        &cfg.model,
        data.features.dim(),
        window,
        &mut stream(cfg.train.seed, &[0]),
    )
    .map_err(CliError::runtime)?;
    let edges: Vec<_> = seq.snapshots().iter().map(|s| Rc::new(attention_edges(s))).collect();
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let mut ctx = ForwardCtx::eval(&mut tape);
    forward(
        &mut ctx,
        &vars,
        &cfg.model,
        &ForwardInput {
            features: &data.features,
            history: &[],
            snapshots: &edges,
        },
    )
    .map_err(CliError::runtime)?;
    drop(ctx);
    Ok(tape.attention_flops())
}

pub fn run(cfg: &RunConfig, windows: &[usize], epochs: usize, out: &Path) -> Result<(Vec<BenchRow>, PathBuf), CliError> {
    let data = Dataset::load(cfg)?;
    let t = data.seq.len();
    if windows.is_empty() || epochs == 0 {
        return Err(CliError::Usage("need at least one window and one epoch".into()));
    }
    if let Some(&w) = windows.iter().find(|&&w| w == 0 || w > t) {
        return Err(CliError::Usage(format!("window {w} is outside 1..={t}")));
    }
    let train = TrainConfig {
        max_epochs: epochs,
        ..cfg.train.clone()
    };
    let mut rows = Vec::new();
    for &w in windows {
        let seq = data.seq.slice(t - w..t).map_err(CliError::runtime)?;
        let flops = temporal_flops(cfg, &data, w)?;
        let start = Instant::now();
        fit(&seq, &data.features, &cfg.model, &train, None).map_err(CliError::runtime)?;
        rows.push(BenchRow {
            window: w,
            epochs,
            seconds_per_epoch: start.elapsed().as_secs_f64() / epochs as f64,
            temporal_attention_flops: flops,
        });
    }
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;
    let path = out.join(BENCH_FILE);
    let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "window,epochs,seconds_per_epoch,temporal_attention_flops")?;
        for r in &rows {
            writeln!(w, "{},{},{:.6},{}", r.window, r.epochs, r.seconds_per_epoch, r.temporal_attention_flops)?;
        }
        w.flush()
    };
    write(&mut w).map_err(CliError::io(&path))?;
    Ok((rows, path))
}
