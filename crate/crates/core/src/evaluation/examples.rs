//! Link/non-link example construction for each evaluation mode.

use std::collections::BTreeSet;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::graph::{NodeId, SnapshotSequence};
use crate::layers::Rng;
use crate::numeric::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum EvalMode {
    /// Every link of the next snapshot.
    AllLinks,
    /// Links of the next snapshot absent from the current one.
    NewLinks,
    /// Links of the next snapshot incident to nodes that first gained an
    /// edge at the current step.
    NewNodes,
    /// Links `delta` steps ahead among nodes already seen.
    MultiStep { delta: usize },
}

impl EvalMode {
    pub fn name(&self) -> &'static str {
        match self {
            EvalMode::AllLinks => "all-links",
            EvalMode::NewLinks => "new-links",
            EvalMode::NewNodes => "new-nodes",
            EvalMode::MultiStep { .. } => "multi-step",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EvalMode::MultiStep { delta } => *delta,
            _ => 1,
        }
    }
}

/// Balanced labelled node pairs for one target snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkExampleSet {
    pub mode: EvalMode,
    /// Last step whose information is available.
    pub step: usize,
    /// Snapshot providing the labels.
    pub target: usize,
    /// Unordered pairs `(u, v)` with `u < v`; positives first.
    pub pairs: Vec<(NodeId, NodeId)>,
    pub labels: Vec<bool>,
}

impl LinkExampleSet {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn num_positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    pub fn subset(&self, idx: &[usize]) -> (Vec<(NodeId, NodeId)>, Vec<bool>) {
        (
            idx.iter().map(|&i| self.pairs[i]).collect(),
            idx.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

/// Nodes with at least one edge in some snapshot `<= step`.
fn seen_nodes(seq: &SnapshotSequence, step: usize) -> Vec<bool> {
    let mut seen = vec![false; seq.num_nodes()];
    for s in &seq.snapshots()[..=step] {
        for v in s.active_nodes() {
            seen[v] = true;
        }
    }
    seen
}

/// Builds examples whose information cutoff is `step` (0-based).
///
/// Positives depend on the mode (see [`EvalMode`]). Negatives are drawn
/// uniformly from pairs not linked in the target snapshot, with both
/// endpoints active there (and, for new-node mode, one endpoint a new
/// node; for multi-step, both endpoints already seen). An empty set is
/// returned when the mode yields no positives.
pub fn build_examples(
    seq: &SnapshotSequence,
    step: usize,
    mode: EvalMode,
    rng: &mut Rng,
) -> Result<LinkExampleSet, EvalError> {
    let target = step + mode.horizon();
    let (current, next) = match (seq.get(step), seq.get(target)) {
        (Some(c), Some(n)) => (c, n),
        _ => {
            return Err(EvalError::Input(format!(
                "step {step} with horizon {} is outside a {}-step sequence",
                mode.horizon(),
                seq.len()
            )))
        }
    };
    let n = seq.num_nodes();
    let active: Vec<NodeId> = next.active_nodes();

    let (positives, anchors, partners): (Vec<(NodeId, NodeId)>, Vec<NodeId>, Vec<NodeId>) =
        match mode {
            EvalMode::AllLinks => (
                next.undirected_edges().map(|(u, v, _)| (u, v)).collect(),
                active.clone(),
                active.clone(),
            ),
            EvalMode::NewLinks => (
                next.undirected_edges()
                    .filter(|&(u, v, _)| !current.has_edge(u, v))
                    .map(|(u, v, _)| (u, v))
                    .collect(),
                active.clone(),
                active.clone(),
            ),
            EvalMode::NewNodes => {
                let before = if step == 0 {
                    vec![false; n]
                } else {
                    seen_nodes(seq, step - 1)
                };
                let is_new: Vec<bool> = (0..n)
                    .map(|v| current.degree(v) > 0 && !before[v])
                    .collect();
                let new_nodes: Vec<NodeId> = (0..n).filter(|&v| is_new[v]).collect();
                (
                    next.undirected_edges()
                        .filter(|&(u, v, _)| is_new[u] || is_new[v])
                        .map(|(u, v, _)| (u, v))
                        .collect(),
                    new_nodes,
                    active.clone(),
                )
            }
            EvalMode::MultiStep { .. } => {
                let seen = seen_nodes(seq, step);
                let known: Vec<NodeId> = active.iter().copied().filter(|&v| seen[v]).collect();
                (
                    next.undirected_edges()
                        .filter(|&(u, v, _)| seen[u] && seen[v])
                        .map(|(u, v, _)| (u, v))
                        .collect(),
                    known.clone(),
                    known,
                )
            }
        };

    let mut out = LinkExampleSet {
        mode,
        step,
        target,
        pairs: Vec::new(),
        labels: Vec::new(),
    };
    if positives.is_empty() {
        return Ok(out);
    }
    let is_candidate = |a: NodeId, b: NodeId| a != b && !next.has_edge(a, b);
    let want = positives.len();
    let mut negatives: BTreeSet<(NodeId, NodeId)> = BTreeSet::new();
    let mut attempts = 0;
    if !anchors.is_empty() && !partners.is_empty() {
        while negatives.len() < want && attempts < 50 * want {
            attempts += 1;
            let a = anchors[rng.gen_range(0..anchors.len())];
            let b = partners[rng.gen_range(0..partners.len())];
            if is_candidate(a, b) {
                negatives.insert((a.min(b), a.max(b)));
            }
        }
    }
    let mut negatives: Vec<(NodeId, NodeId)> = negatives.into_iter().collect();
    if negatives.len() < want {
        // Rejection sampling stalled: enumerate what is left and draw
        // without replacement.
        let taken: BTreeSet<(NodeId, NodeId)> = negatives.iter().copied().collect();
        let mut pool: Vec<(NodeId, NodeId)> = anchors
            .iter()
            .flat_map(|&a| partners.iter().map(move |&b| (a.min(b), a.max(b))))
            .filter(|&(a, b)| is_candidate(a, b) && !taken.contains(&(a, b)))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        while negatives.len() < want && !pool.is_empty() {
            let i = rng.gen_range(0..pool.len());
            negatives.push(pool.swap_remove(i));
        }
    }
    let mut positives = positives;
    if negatives.len() < positives.len() {
        // keep the set balanced when the graph is too dense for enough non-links
        positives.truncate(negatives.len());
    }
    if positives.is_empty() {
        return Ok(out);
    }
    out.labels = std::iter::repeat(true)
        .take(positives.len())
        .chain(std::iter::repeat(false).take(negatives.len()))
        .collect();
    out.pairs = positives;
    out.pairs.extend(negatives);
    Ok(out)
}

/// Row `i` is `e_u * e_v` (elementwise) for `pairs[i] = (u, v)`.
pub fn hadamard_features(embeddings: &Tensor, pairs: &[(NodeId, NodeId)]) -> Result<Tensor, EvalError> {
    let (n, d) = (embeddings.rows(), embeddings.cols());
    let mut data = Vec::with_capacity(pairs.len() * d);
    for &(u, v) in pairs {
        if u >= n || v >= n {
            return Err(EvalError::Input(format!(
                "pair ({u}, {v}) outside {n} embeddings"
            )));
        }
        data.extend(embeddings.row(u).iter().zip(embeddings.row(v)).map(|(a, b)| a * b));
    }
    Tensor::new(vec![pairs.len(), d], data).map_err(|e| EvalError::Input(e.to_string()))
}
