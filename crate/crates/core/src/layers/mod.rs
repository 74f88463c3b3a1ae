//! The forward pass: structural attention on each snapshot, position
//! embeddings, causal temporal attention per node, and a position-wise
//! affine head.

mod checkpoint;
mod config;
mod export;
mod model;
mod params;
mod structural;
mod temporal;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::{HeadSpec, ModelConfig};
pub use export::{export_attention_weights, AttentionWeights, StructuralWeight, TemporalWeight};
pub use model::{
    attention_edges, forward, model_forward, ForwardCtx, ForwardInput, ForwardOutput,
};
pub use params::{
    ModelParams, ModelVars, StructuralHeadParams, StructuralLayerParams, TemporalHeadParams,
    TemporalLayerParams,
};
pub use structural::{structural_attention_forward, structural_layer};
pub use temporal::{
    build_causal_mask, build_windowed_mask, temporal_attention_forward, temporal_layer, CausalMask,
};

use crate::numeric::{NumericError, Var};

/// Random source used for initialization, dropout and sampling.
pub type Rng = rand_chacha::ChaCha8Rng;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs `head` once per head and concatenates the outputs along the
/// feature axis, in head order.
pub fn multi_head_forward<H>(
    ctx: &mut ForwardCtx<'_>,
    heads: &[H],
    mut head: impl FnMut(&mut ForwardCtx<'_>, usize, &H) -> Result<Var, ModelError>,
) -> Result<Var, ModelError> {
    if heads.is_empty() {
        return Err(ModelError::Config("attention layer with zero heads".into()));
    }
    let mut outs = Vec::with_capacity(heads.len());
    for (i, h) in heads.iter().enumerate() {
        outs.push(head(ctx, i, h)?);
    }
    Ok(ctx.tape.concat_cols(&outs)?)
}
