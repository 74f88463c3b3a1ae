//! The evaluation protocol: per cutoff step, learn representations on the
//! snapshots up to it, then score held-out link/non-link pairs at the
//! target step with a logistic classifier over Hadamard features.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    aggregate, auc, build_examples, hadamard_features, logistic_fit, logistic_predict, mean_std,
    split_indices, EvalError, EvalMode, LinkExampleSet, LogisticConfig,
};
use crate::graph::{NodeId, SnapshotSequence};
use crate::numeric::{sigmoid_scalar, Tensor};
use crate::seed::{derive_seed, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Randomized repetitions.
    pub runs: usize,
    /// Share of the non-validation examples used to train the classifier.
    pub train_fraction: f64,
    /// Share of each example set held out for model selection.
    pub validation_fraction: f64,
    /// L2 strength of the downstream classifier.
    pub classifier_l2: f64,
    pub seed: u64,
    /// First cutoff step evaluated (ignored in multi-step mode).
    pub first_step: usize,
    /// Remove validation links from the training snapshots.
    pub exclude_validation_links: bool,
    /// Retrain the representation model in every run; when false it is
    /// trained once per step and only the downstream split varies.
    pub rerandomize_embeddings: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            train_fraction: 0.25,
            validation_fraction: 0.2,
            classifier_l2: 1e-4,
            seed: 0,
            first_step: 0,
            exclude_validation_links: true,
            rerandomize_embeddings: true,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let frac_ok = |f: f64| f > 0.0 && f < 1.0;
        if self.runs == 0 {
            return Err(EvalError::Input("runs must be positive".into()));
        }
        if !frac_ok(self.train_fraction) || !frac_ok(self.validation_fraction) {
            return Err(EvalError::Input(
                "train and validation fractions must lie in (0, 1)".into(),
            ));
        }
        if !(self.classifier_l2 >= 0.0) {
            return Err(EvalError::Input("classifier_l2 must be non-negative".into()));
        }
        Ok(())
    }

    fn classifier(&self) -> LogisticConfig {
        LogisticConfig {
            l2: self.classifier_l2,
            ..LogisticConfig::default()
        }
    }
}

/// Labelled pairs available to representation learning for model
/// selection: a classifier is fit on `train_*` and scored on `val_*`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pub train_pairs: Vec<(NodeId, NodeId)>,
    pub train_labels: Vec<bool>,
    pub val_pairs: Vec<(NodeId, NodeId)>,
    pub val_labels: Vec<bool>,
    pub classifier: LogisticConfig,
}

/// `(auc, loss)` of `embeddings` (`V x d`) on a validation set. The AUC
/// comes from the downstream classifier; the loss is the mean binary
/// cross-entropy of `sigmoid(<e_u, e_v>)`.
pub fn validation_scores(embeddings: &Tensor, val: &ValidationSet) -> Result<(f64, f64), EvalError> {
    let train = hadamard_features(embeddings, &val.train_pairs)?;
    let test = hadamard_features(embeddings, &val.val_pairs)?;
    let model = logistic_fit(&train, &val.train_labels, &val.classifier)?;
    let scores = logistic_predict(&model, &test);
    let a = auc(&scores, &val.val_labels)?;
    let loss = test
        .data()
        .chunks(test.cols().max(1))
        .zip(&val.val_labels)
        .map(|(row, &l)| {
            let p = sigmoid_scalar(row.iter().sum());
            -(if l { p } else { 1.0 - p }).max(1e-12).ln()
        })
        .sum::<f64>()
        / val.val_labels.len().max(1) as f64;
    Ok((a, loss))
}

/// Anything that turns training snapshots into node embeddings at the last
/// training step.
pub trait Embedder: Sync {
    /// Embeddings (`V x d`) after learning on `train`, the snapshots up to
    /// and including the cutoff step.
    fn embed(
        &self,
        train: &SnapshotSequence,
        validation: Option<&ValidationSet>,
        seed: u64,
    ) -> Result<Tensor, EvalError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    /// Last training step.
    pub step: usize,
    /// Step providing the labels.
    pub target: usize,
    pub auc: f64,
    pub test_examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub step: usize,
    pub target: usize,
    pub test_examples: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStep {
    pub run: usize,
    pub step: usize,
    pub target: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    pub horizon: usize,
    pub runs: usize,
    pub steps: Vec<StepSummary>,
    /// Mean over runs of each run's example-weighted AUC.
    pub micro_auc: Option<f64>,
    pub micro_std: Option<f64>,
    /// Mean over runs of each run's unweighted per-step AUC mean.
    pub macro_auc: Option<f64>,
    pub macro_std: Option<f64>,
    pub records: Vec<RunRecord>,
    pub skipped: Vec<SkippedStep>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// One row per run and target step: `step,mode,run,auc`.
    pub fn write_runs_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,mode,run,auc")?;
        for r in &self.records {
            writeln!(w, "{},{},{},{}", r.target, self.mode, r.run, r.auc)?;
        }
        Ok(())
    }

    /// Plot-ready per-step summary: AUC mean and spread against the
    /// target step.
    pub fn write_steps_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "step,train_upto,mode,test_examples,auc_mean,auc_std")?;
        for s in &self.steps {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                s.target, s.step, self.mode, s.test_examples, s.auc_mean, s.auc_std
            )?;
        }
        Ok(())
    }
}

/// Examples for one target with its three-way split.
struct Prepared {
    examples: LinkExampleSet,
    split: Option<(Vec<usize>, Vec<usize>, Vec<usize>)>,
    failure: Option<String>,
}

struct Job {
    cutoff: usize,
    targets: Vec<EvalMode>,
}

fn prepare(
    seq: &SnapshotSequence,
    cutoff: usize,
    mode: EvalMode,
    run: usize,
    cfg: &EvalConfig,
) -> Result<Prepared, EvalError> {
    let target = cutoff + mode.horizon();
    let mut rng = stream(cfg.seed, &[run as u64, target as u64, 1]);
    let examples = build_examples(seq, cutoff, mode, &mut rng)?;
    if examples.is_empty() {
        return Ok(Prepared {
            examples,
            split: None,
            failure: Some("no positive examples".into()),
        });
    }
    let split = split_indices(&examples.labels, cfg.validation_fraction, &mut rng).and_then(
        |(val, rest)| {
            let rest_labels: Vec<bool> = rest.iter().map(|&i| examples.labels[i]).collect();
            let (tr, te) = split_indices(&rest_labels, cfg.train_fraction, &mut rng)?;
            Ok((
                val,
                tr.into_iter().map(|i| rest[i]).collect(),
                te.into_iter().map(|i| rest[i]).collect(),
            ))
        },
    );
    Ok(match split {
        Ok(s) => Prepared {
            examples,
            split: Some(s),
            failure: None,
        },
        Err(EvalError::DegenerateSplit) => Prepared {
            examples,
            split: None,
            failure: Some("too few examples for a split with both classes".into()),
        },
        Err(e) => return Err(e),
    })
}

fn training_data(
    seq: &SnapshotSequence,
    cutoff: usize,
    first: &Prepared,
    cfg: &EvalConfig,
) -> Result<(SnapshotSequence, Option<ValidationSet>), EvalError> {
    let mut train = seq.prefix(cutoff + 1)?;
    let Some((val, tr, _)) = &first.split else {
        return Ok((train, None));
    };
    let (val_pairs, val_labels) = first.examples.subset(val);
    let (train_pairs, train_labels) = first.examples.subset(tr);
    if cfg.exclude_validation_links {
        let held: Vec<(NodeId, NodeId)> = val_pairs
            .iter()
            .zip(&val_labels)
            .filter(|(_, &l)| l)
            .map(|(&p, _)| p)
            .collect();
        train = train.without_pairs(&held);
    }
    Ok((
        train,
        Some(ValidationSet {
            train_pairs,
            train_labels,
            val_pairs,
            val_labels,
            classifier: cfg.classifier(),
        }),
    ))
}

fn embed_job(
    seq: &SnapshotSequence,
    embedder: &dyn Embedder,
    job: &Job,
    run: usize,
    prepared: &[Prepared],
    cfg: &EvalConfig,
) -> Result<Tensor, EvalError> {
    let (train, val) = training_data(seq, job.cutoff, &prepared[0], cfg)?;
    let seed = derive_seed(cfg.seed, &[run as u64, job.cutoff as u64, 0]);
    let emb = embedder.embed(&train, val.as_ref(), seed)?;
    if emb.rows() != seq.num_nodes() {
        return Err(EvalError::Input(format!(
            "embedder returned {} rows for {} nodes",
            emb.rows(),
            seq.num_nodes()
        )));
    }
    Ok(emb)
}

type RunOutcome = (Vec<RunRecord>, Vec<SkippedStep>);

fn score_job(
    job: &Job,
    run: usize,
    prepared: &[Prepared],
    emb: &Tensor,
    cfg: &EvalConfig,
) -> Result<RunOutcome, EvalError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (mode, p) in job.targets.iter().zip(prepared) {
        let target = job.cutoff + mode.horizon();
        let Some((_, tr, te)) = &p.split else {
            skipped.push(SkippedStep {
                run,
                step: job.cutoff,
                target,
                reason: p.failure.clone().unwrap_or_default(),
            });
            continue;
        };
        let (train_pairs, train_labels) = p.examples.subset(tr);
        let (test_pairs, test_labels) = p.examples.subset(te);
        let model = logistic_fit(
            &hadamard_features(emb, &train_pairs)?,
            &train_labels,
            &cfg.classifier(),
        )?;
        let scores = logistic_predict(&model, &hadamard_features(emb, &test_pairs)?);
        records.push(RunRecord {
            run,
            step: job.cutoff,
            target,
            auc: auc(&scores, &test_labels)?,
            test_examples: test_labels.len(),
        });
    }
    Ok((records, skipped))
}

/// Runs the protocol for `mode` over every cutoff step and `cfg.runs`
/// randomized runs. In multi-step mode a single model is trained on all
/// but the last `delta` snapshots and evaluated at each of them.
///
/// Every run/step owns random streams derived from `(seed, run, step)`, so
/// the report does not depend on scheduling.
pub fn evaluate(
    seq: &SnapshotSequence,
    embedder: &dyn Embedder,
    mode: EvalMode,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let t = seq.len();
    if t < 2 {
        return Err(EvalError::Input(format!(
            "evaluation needs at least 2 snapshots, got {t}"
        )));
    }
    let jobs: Vec<Job> = match mode {
        EvalMode::MultiStep { delta } => {
            if delta == 0 || delta >= t {
                return Err(EvalError::Input(format!(
                    "horizon {delta} needs between 1 and {} for {t} snapshots",
                    t - 1
                )));
            }
            vec![Job {
                cutoff: t - 1 - delta,
                targets: (1..=delta).map(|d| EvalMode::MultiStep { delta: d }).collect(),
            }]
        }
        _ => (cfg.first_step..t - 1)
            .map(|c| Job {
                cutoff: c,
                targets: vec![mode],
            })
            .collect(),
    };
    if jobs.is_empty() {
        return Err(EvalError::Input(format!(
            "first step {} leaves nothing to evaluate in {t} snapshots",
            cfg.first_step
        )));
    }

    let units: Vec<(usize, usize)> = (0..cfg.runs)
        .flat_map(|r| (0..jobs.len()).map(move |j| (r, j)))
        .collect();
    let prepared: Vec<Vec<Prepared>> = units
        .par_iter()
        .map(|&(run, j)| {
            jobs[j]
                .targets
                .iter()
                .map(|&m| prepare(seq, jobs[j].cutoff, m, run, cfg))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;

    // Representation learning: per run and step, or once per step.
    let shared: Option<Vec<Tensor>> = if cfg.rerandomize_embeddings {
        None
    } else {
        Some(
            jobs.par_iter()
                .enumerate()
                .map(|(j, job)| embed_job(seq, embedder, job, 0, &prepared[j], cfg))
                .collect::<Result<_, _>>()?,
        )
    };
    let outcomes: Vec<RunOutcome> = units
        .par_iter()
        .enumerate()
        .map(|(u, &(run, j))| {
            let emb = match &shared {
                Some(e) => e[j].clone(),
                None => embed_job(seq, embedder, &jobs[j], run, &prepared[u], cfg)?,
            };
            score_job(&jobs[j], run, &prepared[u], &emb, cfg)
        })
        .collect::<Result<_, _>>()?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (r, s) in outcomes {
        records.extend(r);
        skipped.extend(s);
    }
    Ok(summarize(mode, cfg.runs, records, skipped))
}

fn summarize(
    mode: EvalMode,
    runs: usize,
    records: Vec<RunRecord>,
    skipped: Vec<SkippedStep>,
) -> EvalReport {
    let mut keys: Vec<(usize, usize)> = records.iter().map(|r| (r.step, r.target)).collect();
    keys.sort_unstable();
    keys.dedup();
    let steps = keys
        .iter()
        .map(|&(step, target)| {
            let rs: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.step == step && r.target == target)
                .collect();
            let (m, s) = mean_std(&rs.iter().map(|r| r.auc).collect::<Vec<_>>());
            StepSummary {
                step,
                target,
                test_examples: rs[0].test_examples,
                auc_mean: m,
                auc_std: s,
                runs: rs.len(),
            }
        })
        .collect();
    let mut micro = Vec::new();
    let mut macro_ = Vec::new();
    for run in 0..runs {
        let per: Vec<(f64, usize)> = records
            .iter()
            .filter(|r| r.run == run)
            .map(|r| (r.auc, r.test_examples))
            .collect();
        if let Some((mi, ma)) = aggregate(&per) {
            micro.push(mi);
            macro_.push(ma);
        }
    }
    let stats = |v: &[f64]| {
        if v.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(v);
            (Some(m), Some(s))
        }
    };
    let (micro_auc, micro_std) = stats(&micro);
    let (macro_auc, macro_std) = stats(&macro_);
    EvalReport {
        mode: mode.name().to_string(),
        horizon: mode.horizon(),
        runs,
        steps,
        micro_auc,
        micro_std,
        macro_auc,
        macro_std,
        records,
        skipped,
    }
}
