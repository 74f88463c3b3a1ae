use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::GraphError;
use crate::numeric::Tensor;

/// Input node representations, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMatrix {
    /// Identity features: node `i` is the `i`-th unit vector.
    OneHot(usize),
    Dense(Tensor),
}

impl FeatureMatrix {
    pub fn num_nodes(&self) -> usize {
        match self {
            FeatureMatrix::OneHot(n) => *n,
            FeatureMatrix::Dense(t) => t.rows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FeatureMatrix::OneHot(n) => *n,
            FeatureMatrix::Dense(t) => t.cols(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        match self {
            FeatureMatrix::OneHot(n) => Tensor::identity(*n),
            FeatureMatrix::Dense(t) => t.clone(),
        }
    }
}

/// Reads a TSV of `node_id` followed by `D` reals. Every node must appear
/// exactly once.
pub fn load_features(path: &Path, num_nodes: usize) -> Result<FeatureMatrix, GraphError> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; num_nodes];
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let id_field = fields.next().unwrap_or_default().trim();
        let id: usize = id_field.parse().map_err(|_| GraphError::Parse {
            line: lineno,
            msg: format!("bad node id `{id_field}`"),
        })?;
        if id >= num_nodes {
            return Err(GraphError::Range {
                line: lineno,
                node: id,
                num_nodes,
            });
        }
        let values = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| GraphError::Parse {
                line: lineno,
                msg: e.to_string(),
            })?;
        if values.is_empty() || *dim.get_or_insert(values.len()) != values.len() {
            return Err(GraphError::Parse {
                line: lineno,
                msg: "inconsistent feature dimension".into(),
            });
        }
        if rows[id].replace(values).is_some() {
            return Err(GraphError::Parse {
                line: lineno,
                msg: format!("node {id} listed twice"),
            });
        }
    }
    let rows = rows
        .into_iter()
        .enumerate()
        .map(|(id, r)| {
            r.ok_or(GraphError::Parse {
                line: 0,
                msg: format!("node {id} has no feature row"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Tensor::from_rows(&rows)
        .map(FeatureMatrix::Dense)
        .map_err(|e| GraphError::Parse {
            line: 0,
            msg: e.to_string(),
        })
}
