//! Dynamic link prediction: example construction per mode, Hadamard pair
//! features, a logistic-regression link classifier, rank AUC and
//! micro/macro aggregation over evaluation steps and randomized runs.

mod examples;
mod logistic;
mod metrics;
mod protocol;

pub use examples::{build_examples, hadamard_features, EvalMode, LinkExampleSet};
pub use logistic::{logistic_fit, logistic_predict, split_indices, LogisticConfig, LogisticModel};
pub use metrics::{aggregate, auc, mean_std};
pub use protocol::{
    evaluate, validation_scores, EvalConfig, EvalReport, Embedder, RunRecord, SkippedStep,
    StepSummary, ValidationSet,
};

use crate::graph::GraphError;
use crate::layers::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
    #[error("could not draw a training split containing both classes")]
    DegenerateSplit,
    #[error("invalid evaluation input: {0}")]
    Input(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("representation learning failed: {0}")]
    Embed(Box<dyn std::error::Error + Send + Sync>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
