//! The random-walk context objective, Adam, the minibatch training loop
//! with validation-based checkpoint selection, and incremental training
//! over stored structural representations.

mod adam;
mod embedder;
mod fit;
mod loss;
mod store;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use embedder::{DysatEmbedder, IncrementalEmbedder};
pub use fit::{
    fit, incremental_fit, write_history_csv, EpochRecord, FitResult, IncrementalResult,
};
pub use loss::{context_loss, context_loss_fixed, context_loss_on_tape, LossBatch};
pub use store::RepresentationStore;

use serde::{Deserialize, Serialize};

use crate::evaluation::EvalError;
use crate::layers::ModelError;
use crate::numeric::NumericError;
use crate::sampling::{SamplerConfig, SamplingError};

/// What picks the returned checkpoint when a validation set is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Highest validation link-prediction AUC.
    ValAuc,
    /// Lowest validation cross-entropy of `sigmoid(<e_u, e_v>)`.
    ValLoss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Weight of the negative-sample term.
    pub w_n: f64,
    /// L2 strength on weight matrices.
    pub l2: f64,
    pub batch_nodes: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Per-epoch cap on positive pairs per source node and step; `None`
    /// uses every co-occurrence pair.
    pub max_positives_per_node: Option<usize>,
    pub selection: Selection,
    /// Validate every this many epochs (the last epoch is always
    /// validated).
    pub validate_every: usize,
    /// Draw fresh walks every epoch instead of once per run.
    pub resample_corpus: bool,
    /// Walk and negative-sampling settings. Its `seed` is ignored: walks
    /// use a stream derived from `seed` above.
    pub sampler: SamplerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            w_n: 1.0,
            l2: 5e-4,
            batch_nodes: 256,
            max_epochs: 200,
            seed: 0,
            max_positives_per_node: Some(10),
            selection: Selection::ValAuc,
            validate_every: 1,
            resample_corpus: false,
            sampler: SamplerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |msg: String| Err(TrainError::Config(msg));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(self.w_n >= 0.0 && self.w_n.is_finite()) {
            return bad(format!("w_n {} must be non-negative", self.w_n));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 {} must be non-negative", self.l2));
        }
        if self.batch_nodes == 0 || self.max_epochs == 0 || self.validate_every == 0 {
            return bad("batch_nodes, max_epochs and validate_every must be positive".into());
        }
        if self.max_positives_per_node == Some(0) {
            return bad("max_positives_per_node must be positive".into());
        }
        self.sampler.validate()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error("validation failed: {0}")]
    Eval(#[from] EvalError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("non-finite gradient in {tensor} ({count} of {len} entries)")]
    NonFiniteGradient {
        tensor: String,
        count: usize,
        len: usize,
    },
    #[error("training corpus is empty: no snapshot in the training range has edges")]
    EmptyCorpus,
    #[error("representation store is missing steps {missing:?}")]
    MissingHistory { missing: Vec<usize> },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
