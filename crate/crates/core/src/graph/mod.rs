//! Dynamic graphs as sequences of weighted undirected snapshots over a
//! fixed node set.

mod features;
mod io;

use std::collections::BTreeMap;

pub use features::{load_features, FeatureMatrix};
pub use io::{infer_num_nodes, load_snapshots, parse_snapshots, write_snapshots};

/// Dense node index in `[0, num_nodes)`, stable across all snapshots.
pub type NodeId = usize;

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: node {node} out of range for {num_nodes} nodes")]
    Range {
        line: usize,
        node: usize,
        num_nodes: usize,
    },
    #[error("invalid edge ({u}, {v}, {w}): {msg}")]
    InvalidEdge {
        u: usize,
        v: usize,
        w: f64,
        msg: &'static str,
    },
    #[error("a snapshot sequence needs at least one snapshot")]
    Empty,
    #[error("snapshot {index} has {found} nodes, expected {expected}")]
    NodeCount {
        index: usize,
        found: usize,
        expected: usize,
    },
}

/// One weighted undirected graph.
///
/// Both directions of every edge are stored; adjacency lists are sorted by
/// neighbor id.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    num_nodes: usize,
    adjacency: Vec<Vec<(NodeId, f64)>>,
}

impl Snapshot {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            num_nodes,
            adjacency: vec![Vec::new(); num_nodes],
        }
    }

    /// Builds a snapshot from undirected edges. Repeated pairs, in either
    /// orientation, have their weights summed.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Result<Self, GraphError>
    where
        I: IntoIterator<Item = (NodeId, NodeId, f64)>,
    {
        let mut pairs: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
        for (u, v, w) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(GraphError::InvalidEdge {
                    u,
                    v,
                    w,
                    msg: "node out of range",
                });
            }
            if u == v {
                return Err(GraphError::InvalidEdge {
                    u,
                    v,
                    w,
                    msg: "self loops are not allowed",
                });
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(GraphError::InvalidEdge {
                    u,
                    v,
                    w,
                    msg: "weight must be positive and finite",
                });
            }
            *pairs.entry((u.min(v), u.max(v))).or_insert(0.0) += w;
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        for (&(u, v), &w) in &pairs {
            adjacency[u].push((v, w));
            adjacency[v].push((u, w));
        }
        for list in &mut adjacency {
            list.sort_by_key(|&(n, _)| n);
        }
        Ok(Self {
            num_nodes,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn is_edgeless(&self) -> bool {
        self.adjacency.iter().all(Vec::is_empty)
    }

    pub fn neighbors(&self, v: NodeId) -> &[(NodeId, f64)] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency[v].len()
    }

    pub fn weight(&self, u: NodeId, v: NodeId) -> Option<f64> {
        let list = self.adjacency.get(u)?;
        list.binary_search_by_key(&v, |&(n, _)| n)
            .ok()
            .map(|i| list[i].1)
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.weight(u, v).is_some()
    }

    /// Every stored direction `(u, v, w)`, ordered by `u` then `v`.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&(v, w)| (u, v, w)))
    }

    /// Each undirected edge once, as `(u, v, w)` with `u < v`.
    pub fn undirected_edges(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        self.edges().filter(|&(u, v, _)| u < v)
    }

    /// Nodes with at least one edge.
    pub fn active_nodes(&self) -> Vec<NodeId> {
        (0..self.num_nodes).filter(|&v| self.degree(v) > 0).collect()
    }

    /// Neighbors of `v` with link weights; with `include_self`, `(v, 1.0)`
    /// is appended once.
    pub fn neighborhood(&self, v: NodeId, include_self: bool) -> Vec<(NodeId, f64)> {
        let mut out = self.adjacency[v].clone();
        if include_self {
            out.push((v, 1.0));
        }
        out
    }

    /// Copy with the given undirected pairs removed.
    pub fn without_pairs(&self, pairs: &[(NodeId, NodeId)]) -> Snapshot {
        let mut out = self.clone();
        for &(u, v) in pairs {
            out.adjacency[u].retain(|&(n, _)| n != v);
            out.adjacency[v].retain(|&(n, _)| n != u);
        }
        out
    }
}

/// Ordered snapshots sharing one node set.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSequence {
    num_nodes: usize,
    snapshots: Vec<Snapshot>,
}

impl SnapshotSequence {
    pub fn new(num_nodes: usize, snapshots: Vec<Snapshot>) -> Result<Self, GraphError> {
        if snapshots.is_empty() {
            return Err(GraphError::Empty);
        }
        for (index, s) in snapshots.iter().enumerate() {
            if s.num_nodes() != num_nodes {
                return Err(GraphError::NodeCount {
                    index,
                    found: s.num_nodes(),
                    expected: num_nodes,
                });
            }
        }
        Ok(Self {
            num_nodes,
            snapshots,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of snapshots `T`.
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn get(&self, t: usize) -> Option<&Snapshot> {
        self.snapshots.get(t)
    }

    /// The first `len` snapshots.
    pub fn prefix(&self, len: usize) -> Result<SnapshotSequence, GraphError> {
        SnapshotSequence::new(self.num_nodes, self.snapshots[..len.min(self.len())].to_vec())
    }

    /// Snapshots in `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<SnapshotSequence, GraphError> {
        SnapshotSequence::new(self.num_nodes, self.snapshots[range].to_vec())
    }

    pub fn with_snapshot(&self, t: usize, snapshot: Snapshot) -> SnapshotSequence {
        let mut out = self.clone();
        out.snapshots[t] = snapshot;
        out
    }

    pub fn push(&mut self, snapshot: Snapshot) -> Result<(), GraphError> {
        if snapshot.num_nodes() != self.num_nodes {
            return Err(GraphError::NodeCount {
                index: self.len(),
                found: snapshot.num_nodes(),
                expected: self.num_nodes,
            });
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    /// Copy with the given pairs removed from every snapshot.
    pub fn without_pairs(&self, pairs: &[(NodeId, NodeId)]) -> SnapshotSequence {
        SnapshotSequence {
            num_nodes: self.num_nodes,
            snapshots: self
                .snapshots
                .iter()
                .map(|s| s.without_pairs(pairs))
                .collect(),
        }
    }
}
