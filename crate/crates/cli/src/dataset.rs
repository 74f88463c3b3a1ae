//! Loading the snapshot sequence and node features named by a config.

use std::path::Path;

use dysat::graph::{infer_num_nodes, load_features, load_snapshots, FeatureMatrix, SnapshotSequence};

use crate::config::RunConfig;
use crate::error::CliError;

pub struct Dataset {
    pub seq: SnapshotSequence,
    pub features: FeatureMatrix,
}

fn input_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

impl Dataset {
    pub fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let edges = cfg
            .data
            .edges
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset: set data.edges".into()))?;
        if !edges.is_file() {
            return Err(input_error(edges, "no such file"));
        }
        let n = match cfg.data.num_nodes {
            Some(n) => n,
            None => infer_num_nodes(edges).map_err(|e| input_error(edges, e))?,
        };
        let seq = load_snapshots(edges, n).map_err(|e| input_error(edges, e))?;
        let features = match &cfg.data.features {
            Some(p) => load_features(p, n).map_err(|e| input_error(p, e))?,
            None => FeatureMatrix::OneHot(n),
        };
        Ok(Self { seq, features })
    }

    /// The first `upto` snapshots, or all of them.
    pub fn prefix(&self, upto: Option<usize>) -> Result<SnapshotSequence, CliError> {
        let t = self.seq.len();
        match upto {
            None => Ok(self.seq.clone()),
            Some(k) if k >= 1 && k <= t => self.seq.prefix(k).map_err(CliError::runtime),
            Some(k) => Err(CliError::Usage(format!(
                "--upto {k} is outside the dataset's 1..={t} snapshots"
            ))),
        }
    }
}
