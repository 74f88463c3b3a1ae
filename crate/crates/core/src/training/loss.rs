//! The graph-context loss: per snapshot, binary cross-entropy pulling
//! walk co-occurring pairs together and pushing sampled negatives apart.

use std::rc::Rc;

use rand::seq::index::sample;

use super::TrainError;
use crate::graph::NodeId;
use crate::layers::Rng;
use crate::numeric::{sigmoid_scalar, Tape, Tensor, Var, LOG_CLAMP};
use crate::sampling::{sample_negatives, AliasTable, StepCorpus, WalkCorpus};

/// Index pairs into a time-major `(T * V) x d` embedding matrix: row
/// `t * V + v` holds `e^t_v`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossBatch {
    pub pos_src: Vec<usize>,
    pub pos_dst: Vec<usize>,
    pub neg_src: Vec<usize>,
    pub neg_dst: Vec<usize>,
}

impl LossBatch {
    pub fn is_empty(&self) -> bool {
        self.pos_src.is_empty()
    }

    /// Adds one positive `(v, u)` at step `t` and its negatives.
    pub fn push(&mut self, num_nodes: usize, t: usize, v: NodeId, u: NodeId, negatives: &[NodeId]) {
        let base = t * num_nodes;
        self.pos_src.push(base + v);
        self.pos_dst.push(base + u);
        for &n in negatives {
            self.neg_src.push(base + v);
            self.neg_dst.push(base + n);
        }
    }

    /// Positives whose source is in `nodes`, from each `(row_step,
    /// corpus)`, with `k` negatives per positive drawn from the step's
    /// negative distribution. With a cap, at most `cap` positives per
    /// source node and step are kept, chosen without replacement.
    pub fn sample(
        num_nodes: usize,
        steps: &[(usize, &StepCorpus, Option<&AliasTable>)],
        nodes: &[NodeId],
        k: usize,
        cap: Option<usize>,
        rng: &mut Rng,
    ) -> Self {
        let mut batch = LossBatch::default();
        for &(t, corpus, table) in steps {
            let Some(table) = table else { continue };
            for &v in nodes {
                let pairs = corpus.pairs_from(v);
                let chosen: Vec<usize> = match cap {
                    Some(c) if pairs.len() > c => {
                        let mut idx = sample(rng, pairs.len(), c).into_vec();
                        idx.sort_unstable();
                        idx
                    }
                    _ => (0..pairs.len()).collect(),
                };
                for i in chosen {
                    let negs = sample_negatives(table, k, rng);
                    batch.push(num_nodes, t, v, pairs[i].1, &negs);
                }
            }
        }
        batch
    }
}

/// Records the loss `-sum log s(<a, b>) - w_n * sum log s(-<a', b'>)`
/// over the batch on `tape`.
pub fn context_loss_on_tape(
    tape: &mut Tape,
    embeddings: Var,
    batch: &LossBatch,
    w_n: f64,
) -> Result<Var, TrainError> {
    let term = |tape: &mut Tape, src: &[usize], dst: &[usize], sign: f64| -> Result<Var, TrainError> {
        let a = tape.gather_rows(embeddings, Rc::new(src.to_vec()))?;
        let b = tape.gather_rows(embeddings, Rc::new(dst.to_vec()))?;
        let dots = tape.row_dot(a, b)?;
        let signed = tape.scale(dots, sign);
        let logs = tape.log_sigmoid(signed);
        Ok(tape.sum(logs))
    };
    let mut loss = tape.constant(Tensor::scalar(0.0));
    if !batch.pos_src.is_empty() {
        let pos = term(tape, &batch.pos_src, &batch.pos_dst, 1.0)?;
        let pos = tape.scale(pos, -1.0);
        loss = tape.add(loss, pos)?;
    }
    if !batch.neg_src.is_empty() && w_n != 0.0 {
        let neg = term(tape, &batch.neg_src, &batch.neg_dst, -1.0)?;
        let neg = tape.scale(neg, -w_n);
        loss = tape.add(loss, neg)?;
    }
    Ok(loss)
}

fn log_sigmoid(x: f64) -> f64 {
    sigmoid_scalar(x).max(LOG_CLAMP).ln()
}

/// Loss value for fixed pairs; `embeddings` is `[T, V, d]` or `(T*V) x d`.
pub fn context_loss_fixed(embeddings: &Tensor, batch: &LossBatch, w_n: f64) -> f64 {
    let d = *embeddings.shape().last().expect("non-scalar embeddings");
    let row = |i: usize| &embeddings.data()[i * d..(i + 1) * d];
    let dot = |a: usize, b: usize| row(a).iter().zip(row(b)).map(|(x, y)| x * y).sum::<f64>();
    let pos: f64 = batch
        .pos_src
        .iter()
        .zip(&batch.pos_dst)
        .map(|(&a, &b)| -log_sigmoid(dot(a, b)))
        .sum();
    if w_n == 0.0 {
        return pos;
    }
    let neg: f64 = batch
        .neg_src
        .iter()
        .zip(&batch.neg_dst)
        .map(|(&a, &b)| -log_sigmoid(-dot(a, b)))
        .sum();
    pos + w_n * neg
}

/// Loss over every positive pair of every step of `corpus`, with `k`
/// negatives per positive drawn from the step's distribution.
/// `embeddings` is `[T, V, d]` aligned with the corpus steps.
pub fn context_loss(
    embeddings: &Tensor,
    corpus: &WalkCorpus,
    w_n: f64,
    k: usize,
    rng: &mut Rng,
) -> Result<f64, TrainError> {
    let shape = embeddings.shape();
    if shape.len() != 3 || shape[0] != corpus.steps.len() || shape[1] != corpus.num_nodes {
        return Err(TrainError::Config(format!(
            "embeddings {shape:?} do not align with a {}-step corpus over {} nodes",
            corpus.steps.len(),
            corpus.num_nodes
        )));
    }
    let tables = corpus
        .steps
        .iter()
        .map(|s| s.neg_dist.as_deref().map(AliasTable::new).transpose())
        .collect::<Result<Vec<_>, _>>()?;
    let steps: Vec<(usize, &StepCorpus, Option<&AliasTable>)> = corpus
        .steps
        .iter()
        .zip(&tables)
        .enumerate()
        .map(|(t, (s, a))| (t, s, a.as_ref()))
        .collect();
    let nodes: Vec<NodeId> = (0..corpus.num_nodes).collect();
    let batch = LossBatch::sample(corpus.num_nodes, &steps, &nodes, k, None, rng);
    Ok(context_loss_fixed(embeddings, &batch, w_n))
}
