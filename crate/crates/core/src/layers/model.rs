//! Full forward pass and the context it runs in.

use std::rc::Rc;

use rand::Rng as _;

use super::structural::structural_layer;
use super::temporal::{build_windowed_mask, temporal_layer};
use super::{ModelConfig, ModelError, ModelParams, ModelVars, Rng};
use crate::graph::{FeatureMatrix, Snapshot, SnapshotSequence};
use crate::numeric::{EdgeIndex, Tape, Tensor, Var};

/// Tape plus per-pass settings: dropout source, attention tracing, and a
/// log of which snapshot indices went through the structural block.
pub struct ForwardCtx<'a> {
    pub tape: &'a mut Tape,
    /// Dropout is active iff a generator is present.
    pub rng: Option<&'a mut Rng>,
    pub trace: bool,
    /// `(layer, head, step, alpha)` with alpha laid out like the step's
    /// [`EdgeIndex`].
    pub structural_trace: Vec<(usize, usize, usize, Var)>,
    /// `(layer, head, beta)` with beta node-major, `(V * T) x T`.
    pub temporal_trace: Vec<(usize, usize, Var)>,
    pub structural_calls: Vec<usize>,
}

impl<'a> ForwardCtx<'a> {
    pub fn eval(tape: &'a mut Tape) -> Self {
        Self {
            tape,
            rng: None,
            trace: false,
            structural_trace: Vec::new(),
            temporal_trace: Vec::new(),
            structural_calls: Vec::new(),
        }
    }

    pub fn train(tape: &'a mut Tape, rng: &'a mut Rng) -> Self {
        Self {
            rng: Some(rng),
            ..Self::eval(tape)
        }
    }

    /// Inverted dropout; identity in evaluation mode or when `p == 0`.
    pub fn dropout(&mut self, v: Var, p: f64) -> Result<Var, ModelError> {
        let Some(rng) = self.rng.as_deref_mut() else {
            return Ok(v);
        };
        if p <= 0.0 {
            return Ok(v);
        }
        let keep = 1.0 / (1.0 - p);
        let factors = (0..self.tape.value(v).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        Ok(self.tape.mul_const(v, factors)?)
    }
}

/// Message pattern for structural attention on `snapshot`: for every node
/// `v`, one entry per neighbor `u` (weight `A_uv`) plus the self loop
/// `(v, v, 1.0)`, grouped by `v`.
pub fn attention_edges(snapshot: &Snapshot) -> EdgeIndex {
    let n = snapshot.num_nodes();
    let mut idx = EdgeIndex {
        src: Vec::new(),
        dst: Vec::new(),
        weight: Vec::new(),
        offsets: Vec::with_capacity(n + 1),
    };
    idx.offsets.push(0);
    for v in 0..n {
        for (u, w) in snapshot.neighborhood(v, true) {
            idx.src.push(u);
            idx.dst.push(v);
            idx.weight.push(w);
        }
        idx.offsets.push(idx.src.len());
    }
    idx
}

/// Inputs to [`forward`].
pub struct ForwardInput<'a> {
    pub features: &'a FeatureMatrix,
    /// Stored structural outputs (`V x f`) for steps `0..history.len()`;
    /// recorded as constants.
    pub history: &'a [Tensor],
    /// Attention patterns of the snapshots that follow the history.
    pub snapshots: &'a [Rc<EdgeIndex>],
}

pub struct ForwardOutput {
    /// `(T * V) x d`, time-major: row `t * V + v` is `e^t_v`.
    pub embeddings: Var,
    /// Structural outputs of the fresh snapshots, `V x f` each.
    pub structural: Vec<Var>,
    pub steps: usize,
    pub num_nodes: usize,
}

/// Structural block per fresh snapshot (shared weights), position
/// embeddings, temporal block over each node's sequence, then the affine
/// head.
pub fn forward(
    ctx: &mut ForwardCtx<'_>,
    vars: &ModelVars,
    config: &ModelConfig,
    input: &ForwardInput<'_>,
) -> Result<ForwardOutput, ModelError> {
    let n = input.features.num_nodes();
    let first_fresh = input.history.len();
    let steps = first_fresh + input.snapshots.len();
    if steps == 0 {
        return Err(ModelError::Config("forward over zero snapshots".into()));
    }
    for (t, e) in input.snapshots.iter().enumerate() {
        if e.num_rows() != n {
            return Err(ModelError::Config(format!(
                "snapshot {} has {} nodes, features have {n}",
                first_fresh + t,
                e.num_rows()
            )));
        }
    }

    let features = match input.features {
        FeatureMatrix::OneHot(_) => None,
        FeatureMatrix::Dense(t) => Some(ctx.tape.constant(t.clone())),
    };
    let mut rows = Vec::with_capacity(steps);
    for h in input.history {
        if h.rows() != n {
            return Err(ModelError::Config(format!(
                "stored representation has {} rows for {n} nodes",
                h.rows()
            )));
        }
        rows.push(ctx.tape.constant(h.clone()));
    }
    let mut structural = Vec::with_capacity(input.snapshots.len());
    for (i, edges) in input.snapshots.iter().enumerate() {
        let step = first_fresh + i;
        let h = if config.structural_layers.is_empty() {
            match features {
                Some(x) => x,
                None => ctx.tape.constant(Tensor::identity(n)),
            }
        } else {
            ctx.structural_calls.push(step);
            let mut x = features;
            for (layer, heads) in vars.structural.iter().enumerate() {
                x = Some(structural_layer(
                    ctx,
                    x,
                    edges,
                    heads,
                    layer,
                    step,
                    config.leaky_slope,
                    config.structural_dropout,
                )?);
            }
            x.expect("at least one structural layer")
        };
        structural.push(h);
        rows.push(h);
    }
    let stacked = ctx.tape.concat_rows(&rows)?;

    let hidden = match vars.position {
        Some(p) if !vars.temporal.is_empty() => {
            let table = ctx.tape.value(p).rows();
            if steps > table {
                return Err(ModelError::Config(format!(
                    "{steps} steps exceed the {table}-row position table"
                )));
            }
            let pos_index: Vec<usize> = (0..steps).flat_map(|t| std::iter::repeat(t).take(n)).collect();
            let pos = ctx.tape.gather_rows(p, Rc::new(pos_index))?;
            let x = ctx.tape.add(stacked, pos)?;
            let to_nodes: Vec<usize> = (0..n)
                .flat_map(|v| (0..steps).map(move |t| t * n + v))
                .collect();
            let mut x = ctx.tape.gather_rows(x, Rc::new(to_nodes))?;
            let mask = Rc::new(build_windowed_mask(steps, config.window).m);
            for (layer, heads) in vars.temporal.iter().enumerate() {
                x = temporal_layer(ctx, x, steps, heads, &mask, layer, config.temporal_dropout)?;
            }
            let to_time: Vec<usize> = (0..steps)
                .flat_map(|t| (0..n).map(move |v| v * steps + t))
                .collect();
            ctx.tape.gather_rows(x, Rc::new(to_time))?
        }
        _ => stacked,
    };
    let out = ctx.tape.matmul(hidden, vars.ff_w)?;
    let embeddings = ctx.tape.add_row(out, vars.ff_b)?;
    Ok(ForwardOutput {
        embeddings,
        structural,
        steps,
        num_nodes: n,
    })
}

/// Evaluation-mode embeddings for every step, shape `[T, V, d]`.
pub fn model_forward(
    seq: &SnapshotSequence,
    features: &FeatureMatrix,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Tensor, ModelError> {
    params.check_config(config)?;
    if features.num_nodes() != seq.num_nodes() || features.dim() != params.input_dim {
        return Err(ModelError::Config(format!(
            "features are {}x{}, model expects {} nodes and input width {}",
            features.num_nodes(),
            features.dim(),
            seq.num_nodes(),
            params.input_dim
        )));
    }
    let edges: Vec<Rc<EdgeIndex>> = seq
        .snapshots()
        .iter()
        .map(|s| Rc::new(attention_edges(s)))
        .collect();
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let mut ctx = ForwardCtx::eval(&mut tape);
    let out = forward(
        &mut ctx,
        &vars,
        config,
        &ForwardInput {
            features,
            history: &[],
            snapshots: &edges,
        },
    )?;
    let value = tape.value(out.embeddings).clone();
    let d = value.cols();
    Ok(value.reshape(vec![out.steps, out.num_nodes, d])?)
}
