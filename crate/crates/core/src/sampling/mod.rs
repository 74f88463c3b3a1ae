//! Random-walk context pairs and degree-smoothed negative sampling.

mod alias;
mod corpus;

pub use alias::AliasTable;
pub use corpus::{build_corpus, build_step_corpus, read_corpus, write_corpus, StepCorpus, WalkCorpus};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{NodeId, Snapshot};
use crate::layers::Rng;
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error("snapshot has no edges, so no negative distribution exists")]
    EmptyDistribution,
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("corpus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub walks_per_node: usize,
    /// Nodes per walk, including the start node.
    pub walk_length: usize,
    pub window: usize,
    pub negatives_per_positive: usize,
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            walks_per_node: 10,
            walk_length: 40,
            window: 10,
            negatives_per_positive: 10,
            smoothing: 0.75,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplingError> {
        let positive = [
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("negatives_per_positive", self.negatives_per_positive),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(SamplingError::Config(format!("{name} must be positive")));
            }
        }
        if !(self.smoothing.is_finite() && self.smoothing >= 0.0) {
            return Err(SamplingError::Config(format!(
                "smoothing {} is invalid",
                self.smoothing
            )));
        }
        Ok(())
    }
}

/// First-order walks: `walks_per_node` walks of `walk_length` nodes from
/// every node with at least one edge, each step moving to a neighbor with
/// probability proportional to the link weight. Node `v` draws from its
/// own stream derived from `(cfg.seed, v)`, so start nodes are processed
/// in parallel without affecting the result.
pub fn random_walks(s: &Snapshot, cfg: &SamplerConfig) -> Vec<Vec<NodeId>> {
    let cumulative: Vec<Vec<f64>> = (0..s.num_nodes())
        .map(|v| {
            s.neighbors(v)
                .iter()
                .scan(0.0, |acc, &(_, w)| {
                    *acc += w;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    (0..s.num_nodes())
        .into_par_iter()
        .filter(|&start| s.degree(start) > 0)
        .flat_map_iter(|start| {
            let mut rng = seed::stream(cfg.seed, &[start as u64]);
            let cumulative = &cumulative;
            (0..cfg.walks_per_node)
                .map(|_| {
                    let mut walk = Vec::with_capacity(cfg.walk_length);
                    let mut cur = start;
                    walk.push(cur);
                    while walk.len() < cfg.walk_length {
                        cur = step(s, &cumulative[cur], cur, &mut rng);
                        walk.push(cur);
                    }
                    walk
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

fn step(s: &Snapshot, cumulative: &[f64], cur: NodeId, rng: &mut Rng) -> NodeId {
    let total = *cumulative.last().expect("walk only visits non-isolated nodes");
    let x = rng.gen::<f64>() * total;
    let i = cumulative.partition_point(|&c| c <= x).min(cumulative.len() - 1);
    s.neighbors(cur)[i].0
}

/// Ordered pairs `(walk[i], walk[j])` for `j != i`, `|i - j| <= window`,
/// over every walk. Duplicates are kept.
pub fn cooccurrence_pairs(walks: &[Vec<NodeId>], window: usize) -> Vec<(NodeId, NodeId)> {
    let mut out = Vec::new();
    for walk in walks {
        for i in 0..walk.len() {
            let lo = i.saturating_sub(window);
            let hi = (i + window).min(walk.len() - 1);
            for j in lo..=hi {
                if j != i {
                    out.push((walk[i], walk[j]));
                }
            }
        }
    }
    out
}

/// `P(v)` proportional to `degree(v)^smoothing` over nodes with at least
/// one edge; zero elsewhere.
pub fn negative_distribution(s: &Snapshot, smoothing: f64) -> Result<Vec<f64>, SamplingError> {
    let raw: Vec<f64> = (0..s.num_nodes())
        .map(|v| match s.degree(v) {
            0 => 0.0,
            d => (d as f64).powf(smoothing),
        })
        .collect();
    let total: f64 = raw.iter().sum();
    if total == 0.0 {
        return Err(SamplingError::EmptyDistribution);
    }
    Ok(raw.into_iter().map(|x| x / total).collect())
}

/// `k` independent draws.
pub fn sample_negatives(table: &AliasTable, k: usize, rng: &mut Rng) -> Vec<NodeId> {
    (0..k).map(|_| table.sample(rng)).collect()
}
