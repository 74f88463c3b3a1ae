//! Representation learners plugged into the evaluation protocol.

use super::{fit, incremental_fit, RepresentationStore, TrainConfig};
use crate::evaluation::{EvalError, Embedder, ValidationSet};
use crate::graph::{FeatureMatrix, SnapshotSequence};
use crate::layers::{model_forward, ModelConfig};
use crate::numeric::Tensor;
use crate::seed::derive_seed;

fn features_for(features: &Option<FeatureMatrix>, n: usize) -> Result<FeatureMatrix, EvalError> {
    match features {
        None => Ok(FeatureMatrix::OneHot(n)),
        Some(f) if f.num_nodes() == n => Ok(f.clone()),
        Some(f) => Err(EvalError::Input(format!(
            "feature matrix covers {} nodes, graph has {n}",
            f.num_nodes()
        ))),
    }
}

/// Full model trained jointly on every training snapshot.
#[derive(Debug, Clone)]
pub struct DysatEmbedder {
    pub model: ModelConfig,
    pub train: TrainConfig,
    /// `None` means one-hot node identities.
    pub features: Option<FeatureMatrix>,
}

impl Embedder for DysatEmbedder {
    fn embed(
        &self,
        train: &SnapshotSequence,
        validation: Option<&ValidationSet>,
        seed: u64,
    ) -> Result<Tensor, EvalError> {
        let features = features_for(&self.features, train.num_nodes())?;
        let cfg = TrainConfig {
            seed,
            ..self.train.clone()
        };
        let result = fit(train, &features, &self.model, &cfg, validation)
            .map_err(|e| EvalError::Embed(Box::new(e)))?;
        let all = model_forward(train, &features, &result.params, &self.model)?;
        Ok(all.unstack().pop().expect("at least one step"))
    }
}

/// Incremental variant: walks the training range step by step, each step
/// training a model on its newest snapshot over the stored structural
/// outputs of the earlier steps. The store is rebuilt on every call, and
/// only the final step sees the validation set.
#[derive(Debug, Clone)]
pub struct IncrementalEmbedder {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub features: Option<FeatureMatrix>,
}

impl Embedder for IncrementalEmbedder {
    fn embed(
        &self,
        train: &SnapshotSequence,
        validation: Option<&ValidationSet>,
        seed: u64,
    ) -> Result<Tensor, EvalError> {
        let features = features_for(&self.features, train.num_nodes())?;
        let mut store = RepresentationStore::in_memory();
        let last = train.len() - 1;
        let mut out = None;
        for (t, snapshot) in train.snapshots().iter().enumerate() {
            let cfg = TrainConfig {
                seed: derive_seed(seed, &[t as u64]),
                ..self.train.clone()
            };
            let val = if t == last { validation } else { None };
            let r = incremental_fit(t, snapshot, &features, &mut store, &self.model, &cfg, val)
                .map_err(|e| EvalError::Embed(Box::new(e)))?;
            out = Some(r.embeddings);
        }
        Ok(out.expect("non-empty training range"))
    }
}
