use std::io::{Read, Write};

use super::{cooccurrence_pairs, negative_distribution, random_walks, SamplerConfig, SamplingError};
use crate::graph::{NodeId, Snapshot, SnapshotSequence};
use crate::seed::derive_seed;

/// Positive pairs and negative distribution for one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct StepCorpus {
    /// `(v, u)` pairs sorted by `v` (stable), duplicates kept.
    pub positives: Vec<(NodeId, NodeId)>,
    /// `positives[offsets[v]..offsets[v + 1]]` are the pairs with source `v`.
    pub offsets: Vec<usize>,
    /// `None` for an edgeless snapshot.
    pub neg_dist: Option<Vec<f64>>,
}

impl StepCorpus {
    pub fn from_pairs(
        num_nodes: usize,
        mut positives: Vec<(NodeId, NodeId)>,
        neg_dist: Option<Vec<f64>>,
    ) -> Self {
        positives.sort_by_key(|&(v, _)| v);
        let mut offsets = vec![0; num_nodes + 1];
        for &(v, _) in &positives {
            offsets[v + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        Self {
            positives,
            offsets,
            neg_dist,
        }
    }

    pub fn pairs_from(&self, v: NodeId) -> &[(NodeId, NodeId)] {
        &self.positives[self.offsets[v]..self.offsets[v + 1]]
    }
}

/// Per-snapshot training pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkCorpus {
    pub num_nodes: usize,
    pub steps: Vec<StepCorpus>,
}

impl WalkCorpus {
    pub fn num_positives(&self) -> usize {
        self.steps.iter().map(|s| s.positives.len()).sum()
    }
}

/// Walks, pairs and negative distribution for every snapshot. Step `t`
/// uses the seed derived from `(cfg.seed, t)`.
pub fn build_corpus(seq: &SnapshotSequence, cfg: &SamplerConfig) -> Result<WalkCorpus, SamplingError> {
    let steps = seq
        .snapshots()
        .iter()
        .enumerate()
        .map(|(t, s)| build_step_corpus(s, t, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(WalkCorpus {
        num_nodes: seq.num_nodes(),
        steps,
    })
}

/// Corpus of a single snapshot sitting at absolute step `t`; identical to
/// entry `t` of [`build_corpus`] over any sequence containing it there.
pub fn build_step_corpus(s: &Snapshot, t: usize, cfg: &SamplerConfig) -> Result<StepCorpus, SamplingError> {
    cfg.validate()?;
    let step_cfg = SamplerConfig {
        seed: derive_seed(cfg.seed, &[t as u64]),
        ..cfg.clone()
    };
    let walks = random_walks(s, &step_cfg);
    let pairs = cooccurrence_pairs(&walks, cfg.window);
    let dist = match negative_distribution(s, cfg.smoothing) {
        Ok(d) => Some(d),
        Err(SamplingError::EmptyDistribution) => None,
        Err(e) => return Err(e),
    };
    Ok(StepCorpus::from_pairs(s.num_nodes(), pairs, dist))
}

const MAGIC: &[u8; 8] = b"DWCORP01";

/// Little-endian dump: node count, step count, then per step the pair
/// count, pairs as `u64` pairs, a distribution flag byte and the
/// distribution.
pub fn write_corpus<W: Write>(w: &mut W, corpus: &WalkCorpus) -> Result<(), SamplingError> {
    w.write_all(MAGIC)?;
    w.write_all(&(corpus.num_nodes as u64).to_le_bytes())?;
    w.write_all(&(corpus.steps.len() as u64).to_le_bytes())?;
    for step in &corpus.steps {
        w.write_all(&(step.positives.len() as u64).to_le_bytes())?;
        for &(v, u) in &step.positives {
            w.write_all(&(v as u64).to_le_bytes())?;
            w.write_all(&(u as u64).to_le_bytes())?;
        }
        match &step.neg_dist {
            None => w.write_all(&[0])?,
            Some(d) => {
                w.write_all(&[1])?;
                for &p in d {
                    w.write_all(&p.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn read_corpus<R: Read>(r: &mut R) -> Result<WalkCorpus, SamplingError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(SamplingError::Format("bad corpus magic".into()));
    }
    let mut u64_at = || -> Result<u64, SamplingError> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let num_nodes = u64_at()? as usize;
    let num_steps = u64_at()? as usize;
    drop(u64_at);
    let mut steps = Vec::with_capacity(num_steps);
    for _ in 0..num_steps {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let n = u64::from_le_bytes(b) as usize;
        let mut pairs = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            r.read_exact(&mut b)?;
            let v = u64::from_le_bytes(b) as usize;
            r.read_exact(&mut b)?;
            let u = u64::from_le_bytes(b) as usize;
            if v >= num_nodes || u >= num_nodes {
                return Err(SamplingError::Format(format!("pair ({v}, {u}) out of range")));
            }
            pairs.push((v, u));
        }
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let dist = match flag[0] {
            0 => None,
            1 => {
                let mut d = Vec::with_capacity(num_nodes);
                for _ in 0..num_nodes {
                    r.read_exact(&mut b)?;
                    d.push(f64::from_le_bytes(b));
                }
                Some(d)
            }
            f => return Err(SamplingError::Format(format!("bad distribution flag {f}"))),
        };
        steps.push(StepCorpus::from_pairs(num_nodes, pairs, dist));
    }
    Ok(WalkCorpus { num_nodes, steps })
}
