//! `dysat export`: per-step embedding TSVs and attention-weight CSVs from a
//! checkpoint.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dysat::layers::{export_attention_weights, load_checkpoint, model_forward, ModelConfig, ModelParams};
use dysat::numeric::Tensor;

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::error::CliError;

pub const STRUCTURAL_FILE: &str = "attention_structural.csv";
pub const TEMPORAL_FILE: &str = "attention_temporal.csv";

pub fn embedding_file(step: usize) -> String {
    format!("embeddings_{step:04}.tsv")
}

/// `node<TAB>x_1<TAB>...<TAB>x_d` per row. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn write_embeddings<W: Write>(w: &mut W, emb: &Tensor) -> std::io::Result<()> {
    for v in 0..emb.rows() {
        write!(w, "{v}")?;
        for x in emb.row(v) {
            write!(w, "\t{x}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<Tensor, CliError> {
    let bad = |msg: String| CliError::Input {
        path: path.to_path_buf(),
        msg,
    };
    let file = File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad(format!("line {}: bad node id", i + 1)))?;
        if id != rows.len() {
            return Err(bad(format!("line {}: expected node {}, found {id}", i + 1, rows.len())));
        }
        let row = fields
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("line {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Tensor::from_rows(&rows).map_err(|e| bad(e.to_string()))
}

/// Lists every architecture field on which the two configs disagree.
fn config_diff(run: &ModelConfig, stored: &ModelConfig) -> Vec<String> {
    let mut diff = Vec::new();
    let mut check = |name: &str, a: String, b: String| {
        if a != b {
            diff.push(format!("model.{name}: config {a}, checkpoint {b}"));
        }
    };
    let layers = |l: &[dysat::layers::HeadSpec]| {
        let dims: Vec<String> = l.iter().map(|h| format!("{}x{}", h.heads, h.head_dim)).collect();
        format!("[{}]", dims.join(", "))
    };
    check("structural_layers", layers(&run.structural_layers), layers(&stored.structural_layers));
    check("temporal_layers", layers(&run.temporal_layers), layers(&stored.temporal_layers));
    check("final_dim", run.final_dim.to_string(), stored.final_dim.to_string());
    check("window", format!("{:?}", run.window), format!("{:?}", stored.window));
    diff
}

/// Loads a checkpoint and checks it against the run config and dataset.
pub fn load_compatible(
    path: &Path,
    cfg: &RunConfig,
    data: &Dataset,
) -> Result<(ModelConfig, ModelParams), CliError> {
    if !path.is_file() {
        return Err(CliError::Input {
            path: path.to_path_buf(),
            msg: "no such checkpoint".into(),
        });
    }
    let (stored, params) = load_checkpoint(path).map_err(|e| CliError::Input {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let mut diff = config_diff(&cfg.model, &stored);
    if params.input_dim != data.features.dim() {
        diff.push(format!(
            "input width: dataset features {}, checkpoint {}",
            data.features.dim(),
            params.input_dim
        ));
    }
    if data.seq.len() < params.num_steps {
        diff.push(format!(
            "time steps: dataset {}, checkpoint {}",
            data.seq.len(),
            params.num_steps
        ));
    }
    if !diff.is_empty() {
        return Err(CliError::Config(format!(
            "checkpoint {} does not match the configuration:\n  {}",
            path.display(),
            diff.join("\n  ")
        )));
    }
    Ok((stored, params))
}

#[derive(Debug)]
pub struct ExportOutput {
    pub embeddings: Vec<PathBuf>,
    pub structural: PathBuf,
    pub temporal: PathBuf,
}

/// Exports the snapshots the checkpoint was trained on (its number of
/// time steps).
pub fn run(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<ExportOutput, CliError> {
    let data = Dataset::load(cfg)?;
    let (model, params) = load_compatible(checkpoint, cfg, &data)?;
    let seq = data.prefix(Some(params.num_steps))?;
    std::fs::create_dir_all(out).map_err(CliError::io(out))?;

    let all = model_forward(&seq, &data.features, &params, &model).map_err(CliError::runtime)?;
    let mut embeddings = Vec::new();
    for (t, emb) in all.unstack().iter().enumerate() {
        let path = out.join(embedding_file(t));
        let mut w = BufWriter::new(File::create(&path).map_err(CliError::io(&path))?);
        write_embeddings(&mut w, emb)
            .and_then(|_| w.flush())
            .map_err(CliError::io(&path))?;
        embeddings.push(path);
    }

    let weights =
        export_attention_weights(&model, &params, &seq, &data.features).map_err(CliError::runtime)?;
    let structural = out.join(STRUCTURAL_FILE);
    let mut w = BufWriter::new(File::create(&structural).map_err(CliError::io(&structural))?);
    weights
        .write_structural_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(&structural))?;
    let temporal = out.join(TEMPORAL_FILE);
    let mut w = BufWriter::new(File::create(&temporal).map_err(CliError::io(&temporal))?);
    weights
        .write_temporal_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(&temporal))?;
    Ok(ExportOutput {
        embeddings,
        structural,
        temporal,
    })
}
