//! Learnable weights and their tape bindings.

use rand::Rng as _;

use super::{ModelConfig, ModelError, Rng};
use crate::numeric::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralHeadParams {
    /// Shared transform, `D x F`.
    pub w: Tensor,
    /// Attention vector of length `2F`: the first half scores the
    /// neighbor, the second half the target node.
    pub a: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuralLayerParams {
    pub heads: Vec<StructuralHeadParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalHeadParams {
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TemporalLayerParams {
    pub heads: Vec<TemporalHeadParams>,
}

/// Every learnable tensor of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub input_dim: usize,
    /// Rows of the position table; the longest sequence the model accepts.
    pub num_steps: usize,
    pub structural: Vec<StructuralLayerParams>,
    pub temporal: Vec<TemporalLayerParams>,
    /// `num_steps x f`, present iff the temporal block is.
    pub position: Option<Tensor>,
    pub ff_w: Tensor,
    pub ff_b: Tensor,
}

fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("glorot shape")
}

impl ModelParams {
    /// Glorot-uniform initialization of every weight, the attention vectors
    /// and the position table; zero bias.
    pub fn init(
        config: &ModelConfig,
        input_dim: usize,
        num_steps: usize,
        rng: &mut Rng,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        if input_dim == 0 || num_steps == 0 {
            return Err(ModelError::Config(
                "input_dim and num_steps must be positive".into(),
            ));
        }
        let mut d_in = input_dim;
        let mut structural = Vec::new();
        for spec in &config.structural_layers {
            let heads = (0..spec.heads)
                .map(|_| {
                    let w = glorot(d_in, spec.head_dim, rng);
                    let a = glorot(2 * spec.head_dim, 1, rng)
                        .reshape(vec![2 * spec.head_dim])
                        .expect("attention vector");
                    StructuralHeadParams { w, a }
                })
                .collect();
            structural.push(StructuralLayerParams { heads });
            d_in = spec.output_dim();
        }
        let position = if config.temporal_layers.is_empty() {
            None
        } else {
            Some(glorot(num_steps, d_in, rng))
        };
        let mut temporal = Vec::new();
        for spec in &config.temporal_layers {
            let heads = (0..spec.heads)
                .map(|_| TemporalHeadParams {
                    w_q: glorot(d_in, spec.head_dim, rng),
                    w_k: glorot(d_in, spec.head_dim, rng),
                    w_v: glorot(d_in, spec.head_dim, rng),
                })
                .collect();
            temporal.push(TemporalLayerParams { heads });
            d_in = spec.output_dim();
        }
        let ff_w = glorot(d_in, config.final_dim, rng);
        let ff_b = Tensor::zeros(&[config.final_dim]);
        Ok(Self {
            input_dim,
            num_steps,
            structural,
            temporal,
            position,
            ff_w,
            ff_b,
        })
    }

    /// All tensors in a fixed order: structural heads (`w`, `a`), temporal
    /// heads (`w_q`, `w_k`, `w_v`), position table, `ff_w`, `ff_b`.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for l in &self.structural {
            for h in &l.heads {
                out.extend([&h.w, &h.a]);
            }
        }
        for l in &self.temporal {
            for h in &l.heads {
                out.extend([&h.w_q, &h.w_k, &h.w_v]);
            }
        }
        out.extend(self.position.as_ref());
        out.extend([&self.ff_w, &self.ff_b]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for l in &mut self.structural {
            for h in &mut l.heads {
                out.extend([&mut h.w, &mut h.a]);
            }
        }
        for l in &mut self.temporal {
            for h in &mut l.heads {
                out.extend([&mut h.w_q, &mut h.w_k, &mut h.w_v]);
            }
        }
        out.extend(self.position.as_mut());
        out.extend([&mut self.ff_w, &mut self.ff_b]);
        out
    }

    /// Names matching [`ModelParams::tensors`].
    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (li, l) in self.structural.iter().enumerate() {
            for hi in 0..l.heads.len() {
                out.push(format!("structural.{li}.{hi}.w"));
                out.push(format!("structural.{li}.{hi}.a"));
            }
        }
        for (li, l) in self.temporal.iter().enumerate() {
            for hi in 0..l.heads.len() {
                for m in ["w_q", "w_k", "w_v"] {
                    out.push(format!("temporal.{li}.{hi}.{m}"));
                }
            }
        }
        if self.position.is_some() {
            out.push("position".into());
        }
        out.push("ff.w".into());
        out.push("ff.b".into());
        out
    }

    /// Which tensors take the L2 penalty: weights and attention vectors, not
    /// the position table or the bias.
    pub fn decay_mask(&self) -> Vec<bool> {
        self.names()
            .iter()
            .map(|n| n != "position" && n != "ff.b")
            .collect()
    }

    /// Rebuilds a parameter set with this layout from a flat tensor list.
    pub fn with_tensors(&self, tensors: Vec<Tensor>) -> Result<Self, ModelError> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != tensors.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} tensors, got {}",
                slots.len(),
                tensors.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            if slot.shape() != t.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "tensor shape {:?} where {:?} was expected",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        Ok(out)
    }

    /// Records every tensor on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| tape.param(t.clone())).collect();
        ModelVars::from_flat(self, &vars)
    }

    /// Records every tensor as a constant (no gradients).
    pub fn bind_frozen(&self, tape: &mut Tape) -> ModelVars {
        let vars: Vec<Var> = self
            .tensors()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect();
        ModelVars::from_flat(self, &vars)
    }

    /// Checks this parameter set against a configuration, listing every
    /// dimension that differs.
    pub fn check_config(&self, config: &ModelConfig) -> Result<(), ModelError> {
        let expected = ModelParams::init(
            config,
            self.input_dim,
            self.num_steps,
            &mut <Rng as rand::SeedableRng>::seed_from_u64(0),
        )?;
        let (mine, theirs) = (self.names(), expected.names());
        let mut diffs = Vec::new();
        if mine != theirs {
            diffs.push(format!(
                "tensor layout differs: checkpoint has {} tensors, config implies {}",
                mine.len(),
                theirs.len()
            ));
        }
        for ((name, a), b) in mine.iter().zip(self.tensors()).zip(expected.tensors()) {
            if a.shape() != b.shape() {
                diffs.push(format!("{name}: checkpoint {:?} vs config {:?}", a.shape(), b.shape()));
            }
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Config(format!(
                "checkpoint does not match configuration: {}",
                diffs.join("; ")
            )))
        }
    }
}

/// Tape handles mirroring [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ModelVars {
    pub structural: Vec<Vec<(Var, Var)>>,
    pub temporal: Vec<Vec<[Var; 3]>>,
    pub position: Option<Var>,
    pub ff_w: Var,
    pub ff_b: Var,
    /// Same order as [`ModelParams::tensors`].
    pub flat: Vec<Var>,
}

impl ModelVars {
    /// Regroups `vars` (ordered like [`ModelParams::tensors`]) using the
    /// layer layout of `layout`.
    pub fn from_flat(layout: &ModelParams, vars: &[Var]) -> Self {
        let mut it = vars.iter().copied();
        let mut next = || it.next().expect("variable count matches layout");
        let structural = layout
            .structural
            .iter()
            .map(|l| l.heads.iter().map(|_| (next(), next())).collect())
            .collect();
        let temporal = layout
            .temporal
            .iter()
            .map(|l| l.heads.iter().map(|_| [next(), next(), next()]).collect())
            .collect();
        let position = layout.position.as_ref().map(|_| next());
        let ff_w = next();
        let ff_b = next();
        Self {
            structural,
            temporal,
            position,
            ff_w,
            ff_b,
            flat: vars.to_vec(),
        }
    }
}
