use serde::{Deserialize, Serialize};

use super::ModelError;

/// Number of heads and per-head output width of one attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub heads: usize,
    pub head_dim: usize,
}

impl HeadSpec {
    pub fn new(heads: usize, head_dim: usize) -> Self {
        Self { heads, head_dim }
    }

    pub fn output_dim(&self) -> usize {
        self.heads * self.head_dim
    }
}

/// Architecture hyperparameters.
///
/// An empty `structural_layers` list removes the structural block (node
/// features feed the temporal block directly); an empty `temporal_layers`
/// list removes the temporal block and the position embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub structural_layers: Vec<HeadSpec>,
    pub temporal_layers: Vec<HeadSpec>,
    pub final_dim: usize,
    /// Number of most recent steps (including the current one) each step
    /// may attend to. `None` attends over the full history.
    pub window: Option<usize>,
    pub structural_dropout: f64,
    pub temporal_dropout: f64,
    pub leaky_slope: f64,
}

impl Default for ModelConfig {
    /// One structural and one temporal layer of 16 heads x 8 features.
    fn default() -> Self {
        Self {
            structural_layers: vec![HeadSpec::new(16, 8)],
            temporal_layers: vec![HeadSpec::new(16, 8)],
            final_dim: 128,
            window: None,
            structural_dropout: 0.1,
            temporal_dropout: 0.5,
            leaky_slope: 0.2,
        }
    }
}

impl ModelConfig {
    /// Two structural layers (16 x 16, 8 x 16) for the larger datasets.
    pub fn large() -> Self {
        Self {
            structural_layers: vec![HeadSpec::new(16, 16), HeadSpec::new(8, 16)],
            temporal_layers: vec![HeadSpec::new(16, 8)],
            ..Self::default()
        }
    }

    /// Dropout used by incremental training.
    pub fn incremental(mut self) -> Self {
        self.structural_dropout = 0.4;
        self.temporal_dropout = 0.4;
        self
    }

    pub fn without_dropout(mut self) -> Self {
        self.structural_dropout = 0.0;
        self.temporal_dropout = 0.0;
        self
    }

    /// Width `f` of the structural block output for input width `input_dim`.
    pub fn structural_dim(&self, input_dim: usize) -> usize {
        self.structural_layers
            .last()
            .map_or(input_dim, HeadSpec::output_dim)
    }

    /// Width fed to the feed-forward head.
    pub fn temporal_dim(&self, input_dim: usize) -> usize {
        self.temporal_layers
            .last()
            .map_or_else(|| self.structural_dim(input_dim), HeadSpec::output_dim)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        for (kind, layers) in [
            ("structural", &self.structural_layers),
            ("temporal", &self.temporal_layers),
        ] {
            for (i, l) in layers.iter().enumerate() {
                if l.heads == 0 || l.head_dim == 0 {
                    return err(format!(
                        "{kind} layer {i} needs at least one head of width >= 1, got {}x{}",
                        l.heads, l.head_dim
                    ));
                }
            }
        }
        if self.final_dim == 0 {
            return err("final_dim must be positive".into());
        }
        if self.window == Some(0) {
            return err("window must be at least 1".into());
        }
        for (name, p) in [
            ("structural_dropout", self.structural_dropout),
            ("temporal_dropout", self.temporal_dropout),
        ] {
            if !(0.0..1.0).contains(&p) {
                return err(format!("{name} must be in [0, 1), got {p}"));
            }
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return err(format!("leaky_slope {} is invalid", self.leaky_slope));
        }
        Ok(())
    }
}
