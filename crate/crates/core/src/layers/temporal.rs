//! Scaled dot-product self-attention along each node's time axis.

use std::rc::Rc;

use super::model::ForwardCtx;
use super::{multi_head_forward, ModelError, TemporalLayerParams};
use crate::numeric::{Tape, Tensor, Var};

/// Additive `T x T` attention mask with entries in `{0, -inf}`.
///
/// `M[i][j] = 0` iff step `i` may attend to step `j`, which requires
/// `j <= i`: information never flows from later steps to earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalMask {
    pub m: Tensor,
}

impl CausalMask {
    pub fn steps(&self) -> usize {
        self.m.rows()
    }

    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.m.get(i, j) == 0.0
    }
}

pub fn build_causal_mask(steps: usize) -> CausalMask {
    build_windowed_mask(steps, None)
}

/// Causal mask that additionally hides steps more than `window - 1` back.
pub fn build_windowed_mask(steps: usize, window: Option<usize>) -> CausalMask {
    let w = window.unwrap_or(steps).max(1);
    let mut m = Tensor::filled(&[steps, steps], f64::NEG_INFINITY);
    for i in 0..steps {
        for j in 0..=i {
            if i - j < w {
                m.set(i, j, 0.0);
            }
        }
    }
    CausalMask { m }
}

/// One multi-head temporal attention layer over node-major input.
///
/// `input` holds `B` consecutive blocks of `T` rows (one block per node,
/// rows in time order). Per head: `e = (X W_q)(X W_k)^T / sqrt(F') + M`,
/// `beta = softmax_rows(e)`, `Z = beta (X W_v)`.
pub fn temporal_layer(
    ctx: &mut ForwardCtx<'_>,
    input: Var,
    steps: usize,
    heads: &[[Var; 3]],
    mask: &Rc<Tensor>,
    layer: usize,
    dropout: f64,
) -> Result<Var, ModelError> {
    multi_head_forward(ctx, heads, |ctx, head, &[w_q, w_k, w_v]| {
        let tape = &mut *ctx.tape;
        let q = tape.matmul(input, w_q)?;
        let k = tape.matmul(input, w_k)?;
        let v = tape.matmul(input, w_v)?;
        let f = tape.value(q).cols() as f64;
        let scores = tape.block_matmul_nt(q, k, steps)?;
        let scores = tape.scale(scores, 1.0 / f.sqrt());
        let beta = tape.masked_softmax_rows(scores, Rc::clone(mask))?;
        if ctx.trace {
            ctx.temporal_trace.push((layer, head, beta));
        }
        let beta = ctx.dropout(beta, dropout)?;
        Ok(ctx.tape.block_matmul(beta, v, steps)?)
    })
}

/// Evaluation-mode forward of one temporal layer for a single node's
/// `T x D'` sequence.
pub fn temporal_attention_forward(
    x: &Tensor,
    params: &TemporalLayerParams,
    mask: &CausalMask,
) -> Result<Tensor, ModelError> {
    let steps = x.rows();
    if mask.steps() != steps || mask.m.cols() != steps {
        return Err(ModelError::Config(format!(
            "mask is {:?} for {steps} steps",
            mask.m.shape()
        )));
    }
    let mut tape = Tape::new();
    let heads: Vec<[Var; 3]> = params
        .heads
        .iter()
        .map(|h| {
            [
                tape.constant(h.w_q.clone()),
                tape.constant(h.w_k.clone()),
                tape.constant(h.w_v.clone()),
            ]
        })
        .collect();
    let input = tape.constant(x.clone());
    let mask = Rc::new(mask.m.clone());
    let mut ctx = ForwardCtx::eval(&mut tape);
    let out = temporal_layer(&mut ctx, input, steps, &heads, &mask, 0, 0.0)?;
    Ok(tape.value(out).clone())
}
