use std::collections::BTreeSet;
use std::io::Write;
use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{
    adam_step, context_loss_on_tape, AdamState, LossBatch, RepresentationStore, Selection,
    TrainConfig, TrainError,
};
use crate::evaluation::{validation_scores, ValidationSet};
use crate::graph::{FeatureMatrix, NodeId, Snapshot, SnapshotSequence};
use crate::layers::{
    attention_edges, forward, ForwardCtx, ForwardInput, ModelConfig, ModelError, ModelParams,
};
use crate::numeric::{EdgeIndex, Tape, Tensor};
use crate::sampling::{build_step_corpus, AliasTable, SamplerConfig, StepCorpus};
use crate::seed::{derive_seed, stream};

// Stream labels under the training seed.
const INIT: u64 = 1;
const WALKS: u64 = 2;
const BATCHES: u64 = 3;
const DROPOUT: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of the minibatch losses of the epoch.
    pub loss: f64,
    pub val_auc: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Selected checkpoint.
    pub params: ModelParams,
    pub history: Vec<EpochRecord>,
    /// Epoch of the selected checkpoint.
    pub best_epoch: usize,
    /// Absolute steps that went through the structural block, ascending.
    pub structural_calls: Vec<usize>,
}

/// Result of one incremental step.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementalResult {
    /// `V x d` embeddings at the new step.
    pub embeddings: Tensor,
    /// Structural output `h` of the new step, as appended to the store.
    pub structural: Tensor,
    pub fit: FitResult,
}

/// Writes `epoch,loss,val_auc` rows; missing validation scores are empty.
pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    writeln!(w, "epoch,loss,val_auc")?;
    for r in history {
        let auc = r.val_auc.map(|a| a.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{}", r.epoch, r.loss, auc)?;
    }
    Ok(())
}

/// What one training run sees: constant history rows, the snapshots that
/// go through the structural block, and the steps carrying loss.
struct Problem<'a> {
    features: &'a FeatureMatrix,
    history: Vec<Tensor>,
    fresh: Vec<&'a Snapshot>,
    /// Absolute steps (all fresh) whose walks enter the loss.
    loss_steps: Vec<usize>,
    /// Fail on a corpus without positives instead of returning the
    /// untrained initialization.
    require_corpus: bool,
}

impl Problem<'_> {
    fn first_fresh(&self) -> usize {
        self.history.len()
    }

    fn num_steps(&self) -> usize {
        self.history.len() + self.fresh.len()
    }

    fn snapshot(&self, t: usize) -> &Snapshot {
        self.fresh[t - self.first_fresh()]
    }
}

struct Trained {
    fit: FitResult,
    /// Eval-mode outputs of the selected checkpoint.
    embeddings: Tensor,
    structural: Vec<Tensor>,
}

fn corpus(
    problem: &Problem<'_>,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<Vec<(usize, StepCorpus, Option<AliasTable>)>, TrainError> {
    let path: Vec<u64> = if cfg.resample_corpus {
        vec![WALKS, epoch as u64]
    } else {
        vec![WALKS]
    };
    let sampler = SamplerConfig {
        seed: derive_seed(cfg.seed, &path),
        ..cfg.sampler.clone()
    };
    problem
        .loss_steps
        .iter()
        .map(|&t| {
            let c = build_step_corpus(problem.snapshot(t), t, &sampler)?;
            let table = c.neg_dist.as_deref().map(AliasTable::new).transpose()?;
            Ok((t, c, table))
        })
        .collect()
}

/// Eval-mode forward: all embeddings `(T * V) x d` plus the fresh
/// structural outputs.
fn eval_forward(
    problem: &Problem<'_>,
    edges: &[Rc<EdgeIndex>],
    params: &ModelParams,
    config: &ModelConfig,
    calls: &mut BTreeSet<usize>,
) -> Result<(Tensor, Vec<Tensor>), TrainError> {
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let mut ctx = ForwardCtx::eval(&mut tape);
    let out = forward(
        &mut ctx,
        &vars,
        config,
        &ForwardInput {
            features: problem.features,
            history: &problem.history,
            snapshots: edges,
        },
    )?;
    calls.extend(ctx.structural_calls.iter().copied());
    let structural = out.structural.iter().map(|&h| tape.value(h).clone()).collect();
    Ok((tape.value(out.embeddings).clone(), structural))
}

fn last_step(all: &Tensor, steps: usize, n: usize) -> Tensor {
    let d = all.cols();
    Tensor::new(vec![n, d], all.data()[(steps - 1) * n * d..steps * n * d].to_vec())
        .expect("slice of embeddings")
}

fn train(
    problem: &Problem<'_>,
    config: &ModelConfig,
    cfg: &TrainConfig,
    validation: Option<&ValidationSet>,
) -> Result<Trained, TrainError> {
    config.validate()?;
    cfg.validate()?;
    let n = problem.features.num_nodes();
    for s in &problem.fresh {
        if s.num_nodes() != n {
            return Err(ModelError::Config(format!(
                "snapshot has {} nodes, features have {n}",
                s.num_nodes()
            ))
            .into());
        }
    }
    let steps = problem.num_steps();
    let edges: Vec<Rc<EdgeIndex>> = problem
        .fresh
        .iter()
        .map(|s| Rc::new(attention_edges(s)))
        .collect();
    let mut params = ModelParams::init(
        config,
        problem.features.dim(),
        steps,
        &mut stream(cfg.seed, &[INIT]),
    )?;
    let decay = params.decay_mask();
    let names = params.names();
    let mut adam = AdamState::new(&params.tensors());
    let mut calls = BTreeSet::new();

    let mut data = corpus(problem, cfg, 0)?;
    if problem.require_corpus && data.iter().all(|(_, c, _)| c.positives.is_empty()) {
        return Err(TrainError::EmptyCorpus);
    }
    let mut order: Vec<NodeId> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 1..=cfg.max_epochs {
        if cfg.resample_corpus && epoch > 1 {
            data = corpus(problem, cfg, epoch)?;
        }
        let step_refs: Vec<(usize, &StepCorpus, Option<&AliasTable>)> = data
            .iter()
            .map(|(t, c, a)| (*t, c, a.as_ref()))
            .collect();
        let mut rng = stream(cfg.seed, &[BATCHES, epoch as u64]);
        let mut drop_rng = stream(cfg.seed, &[DROPOUT, epoch as u64]);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_nodes) {
            let batch = LossBatch::sample(
                n,
                &step_refs,
                chunk,
                cfg.sampler.negatives_per_positive,
                cfg.max_positives_per_node,
                &mut rng,
            );
            if batch.is_empty() {
                continue;
            }
            let mut tape = Tape::new();
            let vars = params.bind(&mut tape);
            let mut ctx = ForwardCtx::train(&mut tape, &mut drop_rng);
            let out = forward(
                &mut ctx,
                &vars,
                config,
                &ForwardInput {
                    features: problem.features,
                    history: &problem.history,
                    snapshots: &edges,
                },
            )?;
            calls.extend(ctx.structural_calls.iter().copied());
            drop(ctx);
            let loss = context_loss_on_tape(&mut tape, out.embeddings, &batch, cfg.w_n)?;
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(TrainError::Diverged { epoch, loss: value });
            }
            epoch_loss += value;
            let mut grads = tape.backward(loss)?;
            let flat: Vec<Vec<f64>> = vars
                .flat
                .iter()
                .map(|&v| grads.take_or_zeros(v, tape.value(v).len()))
                .collect();
            let mut tensors = params.tensors_mut();
            adam_step(&mut tensors, &flat, &mut adam, cfg.learning_rate, cfg.l2, &decay).map_err(
                |e| match e {
                    TrainError::NonFiniteGradient { tensor, count, len } => {
                        let idx: usize = tensor.trim_start_matches('#').parse().unwrap_or(0);
                        TrainError::NonFiniteGradient {
                            tensor: names.get(idx).cloned().unwrap_or(tensor),
                            count,
                            len,
                        }
                    }
                    e => e,
                },
            )?;
        }
        if !epoch_loss.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                loss: epoch_loss,
            });
        }
        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss,
            val_auc: None,
            val_loss: None,
        };
        if let Some(val) = validation {
            if epoch % cfg.validate_every == 0 || epoch == cfg.max_epochs {
                let (all, _) = eval_forward(problem, &edges, &params, config, &mut calls)?;
                let (auc, loss) = validation_scores(&last_step(&all, steps, n), val)?;
                record.val_auc = Some(auc);
                record.val_loss = Some(loss);
                let score = match cfg.selection {
                    Selection::ValAuc => auc,
                    Selection::ValLoss => -loss,
                };
                if best.as_ref().map_or(true, |(s, _, _)| score > *s) {
                    best = Some((score, epoch, params.clone()));
                }
            }
        }
        history.push(record);
    }

    let (best_epoch, params) = match best {
        Some((_, e, p)) => (e, p),
        None => (cfg.max_epochs, params),
    };
    let (embeddings, structural) = eval_forward(problem, &edges, &params, config, &mut calls)?;
    Ok(Trained {
        fit: FitResult {
            params,
            history,
            best_epoch,
            structural_calls: calls.into_iter().collect(),
        },
        embeddings,
        structural,
    })
}

/// Trains a fresh model on every snapshot of `seq` jointly, the loss
/// summed over all steps. With a validation set the checkpoint scoring
/// best on it is returned, otherwise the final one.
pub fn fit(
    seq: &SnapshotSequence,
    features: &FeatureMatrix,
    config: &ModelConfig,
    cfg: &TrainConfig,
    validation: Option<&ValidationSet>,
) -> Result<FitResult, TrainError> {
    if features.num_nodes() != seq.num_nodes() {
        return Err(TrainError::Config(format!(
            "{} feature rows for {} nodes",
            features.num_nodes(),
            seq.num_nodes()
        )));
    }
    let problem = Problem {
        features,
        history: Vec::new(),
        fresh: seq.snapshots().iter().collect(),
        loss_steps: (0..seq.len()).collect(),
        require_corpus: true,
    };
    Ok(train(&problem, config, cfg, validation)?.fit)
}

/// Trains on the newest snapshot only: the structural block runs on
/// `snapshot` (step `step`), the temporal block attends over the stored
/// `h^0 .. h^{step-1}` (constants) and the fresh output, and the loss
/// uses walks on `snapshot` alone. The new structural output is appended
/// to `store`. An edgeless snapshot yields no walks; its model keeps the
/// initial weights.
pub fn incremental_fit(
    step: usize,
    snapshot: &Snapshot,
    features: &FeatureMatrix,
    store: &mut RepresentationStore,
    config: &ModelConfig,
    cfg: &TrainConfig,
    validation: Option<&ValidationSet>,
) -> Result<IncrementalResult, TrainError> {
    if features.num_nodes() != snapshot.num_nodes() {
        return Err(TrainError::Config(format!(
            "{} feature rows for {} nodes",
            features.num_nodes(),
            snapshot.num_nodes()
        )));
    }
    let problem = Problem {
        features,
        history: store.history(step)?,
        fresh: vec![snapshot],
        loss_steps: vec![step],
        require_corpus: false,
    };
    let trained = train(&problem, config, cfg, validation)?;
    let n = snapshot.num_nodes();
    let embeddings = last_step(&trained.embeddings, step + 1, n);
    let structural = trained.structural.into_iter().next().expect("one fresh snapshot");
    store.save(step, structural.clone())?;
    Ok(IncrementalResult {
        embeddings,
        structural,
        fit: trained.fit,
    })
}
