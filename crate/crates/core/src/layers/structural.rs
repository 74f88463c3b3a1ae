//! Graph attention over immediate neighbors within one snapshot.

use std::rc::Rc;

use super::model::{attention_edges, ForwardCtx};
use super::{multi_head_forward, ModelError, StructuralLayerParams};
use crate::graph::{FeatureMatrix, Snapshot};
use crate::numeric::{EdgeIndex, Tape, Tensor, Var};

/// One multi-head structural attention layer.
///
/// For every node `v` and neighbor `u` (self loop included) the logit is
/// `leaky_relu(A_uv * a . [W x_u || W x_v])`; coefficients are a softmax
/// over the neighborhood and the output is `elu(sum_u alpha_uv W x_u)`.
/// `input` of `None` means one-hot node features, so `W x_u` is row `u` of
/// `W`.
#[allow(clippy::too_many_arguments)]
pub fn structural_layer(
    ctx: &mut ForwardCtx<'_>,
    input: Option<Var>,
    edges: &Rc<EdgeIndex>,
    heads: &[(Var, Var)],
    layer: usize,
    step: usize,
    slope: f64,
    dropout: f64,
) -> Result<Var, ModelError> {
    multi_head_forward(ctx, heads, |ctx, head, &(w, a)| {
        let tape = &mut *ctx.tape;
        let projected = match input {
            Some(x) => tape.matmul(x, w)?,
            None => w,
        };
        let f = tape.value(projected).cols();
        let a_src = tape.slice_rows(a, 0, f)?;
        let a_dst = tape.slice_rows(a, f, 2 * f)?;
        let s_src = tape.matmul(projected, a_src)?;
        let s_dst = tape.matmul(projected, a_dst)?;
        let logits = tape.edge_scores(s_src, s_dst, Rc::clone(edges))?;
        let logits = tape.leaky_relu(logits, slope);
        let alpha = tape.segment_softmax(logits, Rc::clone(edges))?;
        if ctx.trace {
            ctx.structural_trace.push((layer, head, step, alpha));
        }
        let alpha = ctx.dropout(alpha, dropout)?;
        let agg = ctx.tape.aggregate(alpha, projected, Rc::clone(edges))?;
        Ok(ctx.tape.elu(agg))
    })
}

/// Evaluation-mode forward of one structural layer on one snapshot.
pub fn structural_attention_forward(
    snapshot: &Snapshot,
    features: &FeatureMatrix,
    params: &StructuralLayerParams,
    slope: f64,
) -> Result<Tensor, ModelError> {
    if features.num_nodes() != snapshot.num_nodes() {
        return Err(ModelError::Config(format!(
            "{} feature rows for {} nodes",
            features.num_nodes(),
            snapshot.num_nodes()
        )));
    }
    let mut tape = Tape::new();
    let heads: Vec<(Var, Var)> = params
        .heads
        .iter()
        .map(|h| (tape.constant(h.w.clone()), tape.constant(h.a.clone())))
        .collect();
    if let Some(h) = params.heads.first() {
        if h.w.rows() != features.dim() {
            return Err(ModelError::Config(format!(
                "W_s has {} rows but features have {} columns",
                h.w.rows(),
                features.dim()
            )));
        }
    }
    let input = match features {
        FeatureMatrix::OneHot(_) => None,
        FeatureMatrix::Dense(t) => Some(tape.constant(t.clone())),
    };
    let edges = Rc::new(attention_edges(snapshot));
    let mut ctx = ForwardCtx::eval(&mut tape);
    let out = structural_layer(&mut ctx, input, &edges, &heads, 0, 0, slope, 0.0)?;
    Ok(tape.value(out).clone())
}
