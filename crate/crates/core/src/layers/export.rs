//! Raw attention coefficients from an evaluation-mode forward pass.

use std::io::Write;
use std::rc::Rc;

use super::model::{attention_edges, forward, ForwardCtx, ForwardInput};
use super::{ModelConfig, ModelError, ModelParams};
use crate::graph::{FeatureMatrix, SnapshotSequence};
use crate::numeric::{EdgeIndex, Tape};

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalWeight {
    pub layer: usize,
    pub head: usize,
    pub node: usize,
    pub i: usize,
    pub j: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralWeight {
    pub layer: usize,
    pub head: usize,
    pub snapshot: usize,
    /// Neighbor (message source).
    pub u: usize,
    /// Attending node.
    pub v: usize,
    pub alpha: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AttentionWeights {
    /// Unmasked entries only (`j <= i` within the window).
    pub temporal: Vec<TemporalWeight>,
    pub structural: Vec<StructuralWeight>,
}

impl AttentionWeights {
    pub fn write_temporal_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "layer,head,node,i,j,beta")?;
        for r in &self.temporal {
            writeln!(w, "{},{},{},{},{},{}", r.layer, r.head, r.node, r.i, r.j, r.beta)?;
        }
        Ok(())
    }

    pub fn write_structural_csv<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "layer,head,snapshot,u,v,alpha")?;
        for r in &self.structural {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.layer, r.head, r.snapshot, r.u, r.v, r.alpha
            )?;
        }
        Ok(())
    }
}

pub fn export_attention_weights(
    config: &ModelConfig,
    params: &ModelParams,
    seq: &SnapshotSequence,
    features: &FeatureMatrix,
) -> Result<AttentionWeights, ModelError> {
    params.check_config(config)?;
    let edges: Vec<Rc<EdgeIndex>> = seq
        .snapshots()
        .iter()
        .map(|s| Rc::new(attention_edges(s)))
        .collect();
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let mut ctx = ForwardCtx::eval(&mut tape);
    ctx.trace = true;
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
    let (s_trace, t_trace) = (ctx.structural_trace, ctx.temporal_trace);
    let mut weights = AttentionWeights::default();
    for (layer, head, step, alpha) in s_trace {
        let e = &edges[step];
        for (k, &a) in tape.value(alpha).data().iter().enumerate() {
            weights.structural.push(StructuralWeight {
                layer,
                head,
                snapshot: step,
                u: e.src[k],
                v: e.dst[k],
                alpha: a,
            });
        }
    }
    let steps = out.steps;
    let mask = super::build_windowed_mask(steps, config.window);
    for (layer, head, beta) in t_trace {
        let b = tape.value(beta);
        for node in 0..out.num_nodes {
            for i in 0..steps {
                for j in 0..steps {
                    if mask.allows(i, j) {
                        weights.temporal.push(TemporalWeight {
                            layer,
                            head,
                            node,
                            i,
                            j,
                            beta: b.get(node * steps + i, j),
                        });
                    }
                }
            }
        }
    }
    Ok(weights)
}
