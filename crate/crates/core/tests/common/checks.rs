//! Randomized checks shared by the property tests and the acceptance run.
//! Each check builds its instance from the arguments, compares against the
//! loop oracles in the parent module, and panics with a description on
//! failure.

use std::collections::BTreeMap;
use std::rc::Rc;

use dysat::graph::{FeatureMatrix, Snapshot, SnapshotSequence};
use dysat::layers::{
    attention_edges, build_causal_mask, build_windowed_mask, export_attention_weights, forward,
    model_forward, structural_attention_forward, structural_layer, temporal_attention_forward,
    temporal_layer, ForwardCtx, ForwardInput, HeadSpec, ModelConfig, ModelError, ModelVars,
};
use dysat::numeric::{grad_check, EdgeIndex, GradCheckReport, NumericError, Tape, Tensor, Var};
use dysat::training::{context_loss_fixed, context_loss_on_tape, LossBatch, TrainError};
use rand::seq::SliceRandom;
use rand::Rng as _;

use super::*;

/// Agreement required between vectorized code and the loop oracles.
pub const ORACLE_TOL: f64 = 1e-10;
/// Finite-difference step and relative-error tolerance.
pub const GRAD_H: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

fn edges_of(seq: &SnapshotSequence) -> Vec<Rc<EdgeIndex>> {
    seq.snapshots().iter().map(|s| Rc::new(attention_edges(s))).collect()
}

/// Half the time, restrict temporal attention to a random window.
fn maybe_window(config: &mut ModelConfig, steps: usize, p: f64, r: &mut Rng) {
    if r.gen_bool(p) {
        config.window = Some(r.gen_range(1..=steps));
    }
}

pub fn structural_matches_oracle(seed: u64, n: usize, p: f64) {
    let mut r = rng(seed);
    let s = random_snapshot(n, p, &mut r);
    let config = random_config(&mut r);
    let features = random_features(n, &mut r);
    let params = random_params(&config, features.dim(), 1, &mut r);
    let layer = &params.structural[0];
    let fast = structural_attention_forward(&s, &features, layer, config.leaky_slope).unwrap();
    let slow = structural_oracle(&s, &features.to_tensor(), layer, config.leaky_slope);
    let diff = fast.max_abs_diff(&slow);
    assert!(diff <= ORACLE_TOL, "structural layer differs from loops by {diff:e}");
}

pub fn temporal_matches_oracle(seed: u64, steps: usize, window: Option<usize>) {
    let mut r = rng(seed);
    let config = random_config(&mut r);
    let params = random_params(&config, 3, steps, &mut r);
    let layer = &params.temporal[0];
    let width = layer.heads[0].w_q.rows();
    let x = random_tensor(steps, width, 1.5, &mut r);
    let mask = build_windowed_mask(steps, window);
    let fast = temporal_attention_forward(&x, layer, &mask).unwrap();
    let slow = temporal_oracle(&x, layer, window);
    let diff = fast.max_abs_diff(&slow);
    assert!(diff <= ORACLE_TOL, "temporal layer differs from loops by {diff:e}");
}

pub fn model_matches_oracle(seed: u64, n: usize, steps: usize) {
    let mut r = rng(seed);
    let seq = random_sequence(n, steps, 0.5, &mut r);
    let mut config = random_config(&mut r);
    maybe_window(&mut config, steps, 0.3, &mut r);
    let features = random_features(n, &mut r);
    let params = random_params(&config, features.dim(), steps, &mut r);
    let fast = model_forward(&seq, &features, &params, &config).unwrap();
    let slow = model_oracle(&seq, &features, &params, &config);
    assert_eq!(fast.shape(), slow.shape());
    let diff = fast.max_abs_diff(&slow);
    assert!(diff <= ORACLE_TOL, "model differs from composed loops by {diff:e}");
}

/// The loss on fixed embeddings and on the training tape (after a forward
/// pass) against the loop oracle.
pub fn loss_matches_oracle(seed: u64, n: usize, steps: usize, w_n: f64) {
    let mut r = rng(seed);
    let seq = random_sequence(n, steps, 0.6, &mut r);
    let config = random_config(&mut r);
    let features = FeatureMatrix::OneHot(n);
    let params = random_params(&config, n, steps, &mut r);
    let emb = model_forward(&seq, &features, &params, &config).unwrap();

    let mut batch = LossBatch::default();
    let mut pairs = vec![Vec::new(); steps];
    for (t, step_pairs) in pairs.iter_mut().enumerate() {
        for _ in 0..r.gen_range(0..8) {
            let (v, u) = (r.gen_range(0..n), r.gen_range(0..n));
            let negs: Vec<usize> = (0..r.gen_range(0..4)).map(|_| r.gen_range(0..n)).collect();
            batch.push(n, t, v, u, &negs);
            step_pairs.push((v, u, negs));
        }
    }
    let oracle = loss_oracle(&emb, &pairs, w_n);
    assert!(oracle >= 0.0);
    let direct = context_loss_fixed(&emb, &batch, w_n);
    assert!((direct - oracle).abs() <= ORACLE_TOL, "loss {direct} vs oracle {oracle}");

    let edges = edges_of(&seq);
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let mut ctx = ForwardCtx::eval(&mut tape);
    let input = ForwardInput {
        features: &features,
        history: &[],
        snapshots: &edges,
    };
    let out = forward(&mut ctx, &vars, &config, &input).unwrap();
    let loss = context_loss_on_tape(&mut tape, out.embeddings, &batch, w_n).unwrap();
    let on_tape = tape.value(loss).data()[0];
    assert!((on_tape - oracle).abs() <= ORACLE_TOL, "tape loss {on_tape} vs oracle {oracle}");
}

/// Replacing snapshots `k..T` leaves the embeddings of steps `< k`
/// bit-identical.
pub fn future_does_not_leak(seed: u64, n: usize, steps: usize) {
    let mut r = rng(seed);
    let seq = random_sequence(n, steps, 0.5, &mut r);
    let config = random_config(&mut r);
    let features = random_features(n, &mut r);
    let params = random_params(&config, features.dim(), steps, &mut r);
    let before = model_forward(&seq, &features, &params, &config).unwrap().unstack();

    let k = r.gen_range(1..steps);
    let mut mutated = seq.clone();
    for t in k..steps {
        mutated = mutated.with_snapshot(t, random_snapshot(n, r.gen_range(0.0..1.0), &mut r));
    }
    let after = model_forward(&mutated, &features, &params, &config).unwrap().unstack();
    for t in 0..k {
        assert_eq!(bits(&before[t]), bits(&after[t]), "step {t} changed after mutating step {k}");
    }
}

/// Every structural and temporal attention row sums to one within 1e-12,
/// and temporal weights exist only for `j <= i` inside the window.
pub fn attention_rows_are_distributions(seed: u64, n: usize, steps: usize) {
    let mut r = rng(seed);
    let seq = random_sequence(n, steps, 0.5, &mut r);
    let mut config = random_config(&mut r);
    maybe_window(&mut config, steps, 0.5, &mut r);
    let features = random_features(n, &mut r);
    let params = random_params(&config, features.dim(), steps, &mut r);
    let w = export_attention_weights(&config, &params, &seq, &features).unwrap();

    let heads_t: usize = config.temporal_layers.iter().map(|l| l.heads).sum();
    let mut sums = BTreeMap::new();
    for b in &w.temporal {
        assert!(b.j <= b.i, "beta at ({}, {})", b.i, b.j);
        if let Some(win) = config.window {
            assert!(b.i - b.j < win);
        }
        *sums.entry((b.layer, b.head, b.node, b.i)).or_insert(0.0) += b.beta;
    }
    assert_eq!(sums.len(), heads_t * n * steps);
    for s in sums.values() {
        assert!((s - 1.0).abs() <= 1e-12, "beta row sums to {s}");
    }

    let heads_s: usize = config.structural_layers.iter().map(|l| l.heads).sum();
    let mut sums = BTreeMap::new();
    for a in &w.structural {
        *sums.entry((a.layer, a.head, a.snapshot, a.v)).or_insert(0.0) += a.alpha;
    }
    assert_eq!(sums.len(), heads_s * n * steps);
    for s in sums.values() {
        assert!((s - 1.0).abs() <= 1e-12, "alpha row sums to {s}");
    }
}

/// The raw temporal coefficients computed during the forward pass are
/// exactly zero wherever the mask forbids attention.
pub fn masked_weights_are_zero(seed: u64, n: usize, steps: usize) {
    let mut r = rng(seed);
    let seq = random_sequence(n, steps, 0.5, &mut r);
    let mut config = random_config(&mut r);
    maybe_window(&mut config, steps, 0.5, &mut r);
    let features = random_features(n, &mut r);
    let params = random_params(&config, features.dim(), steps, &mut r);
    let edges = edges_of(&seq);
    let mut tape = Tape::new();
    let vars = params.bind_frozen(&mut tape);
    let mut ctx = ForwardCtx::eval(&mut tape);
    ctx.trace = true;
    let input = ForwardInput {
        features: &features,
        history: &[],
        snapshots: &edges,
    };
    forward(&mut ctx, &vars, &config, &input).unwrap();
    let trace = std::mem::take(&mut ctx.temporal_trace);
    drop(ctx);
    let mask = build_windowed_mask(steps, config.window);
    assert!(!trace.is_empty());
    for (_, _, beta) in trace {
        let b = tape.value(beta);
        assert_eq!(b.rows(), n * steps);
        for row in 0..b.rows() {
            let i = row % steps;
            for j in 0..steps {
                if !mask.allows(i, j) {
                    assert_eq!(b.get(row, j).to_bits(), 0f64.to_bits(), "beta[{i}][{j}]");
                }
            }
        }
    }
}

/// Permuting node ids (edges and feature rows) permutes the embeddings.
pub fn relabelling_permutes_embeddings(seed: u64, n: usize, steps: usize) {
    let mut r = rng(seed);
    let seq = random_sequence(n, steps, 0.5, &mut r);
    let config = random_config(&mut r);
    let x = random_tensor(n, 3, 1.0, &mut r);
    let params = random_params(&config, 3, steps, &mut r);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut r);

    let permuted_seq = SnapshotSequence::new(
        n,
        seq.snapshots()
            .iter()
            .map(|s| {
                Snapshot::from_edges(n, s.undirected_edges().map(|(u, v, w)| (perm[u], perm[v], w)))
                    .unwrap()
            })
            .collect(),
    )
    .unwrap();
    let mut px = Tensor::zeros(&[n, 3]);
    for v in 0..n {
        for c in 0..3 {
            px.set(perm[v], c, x.get(v, c));
        }
    }
    let a = model_forward(&seq, &FeatureMatrix::Dense(x), &params, &config).unwrap().unstack();
    let b = model_forward(&permuted_seq, &FeatureMatrix::Dense(px), &params, &config)
        .unwrap()
        .unstack();
    for t in 0..steps {
        for v in 0..n {
            for (p, q) in a[t].row(v).iter().zip(b[t].row(perm[v])) {
                assert!((p - q).abs() <= 1e-12, "node {v} at step {t}: {p} vs {q}");
            }
        }
    }
}

/// Reduces `v` to a scalar with fixed random weights so that every output
/// entry gets a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Result<Var, NumericError> {
    let t = tape.value(v).clone();
    let mut r = rng(seed);
    let w: Vec<f64> = (0..t.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
    let weights = tape.constant(Tensor::new(t.shape().to_vec(), w)?);
    let prod = tape.mul(v, weights)?;
    Ok(tape.sum(prod))
}

pub type GradResult = (String, GradCheckReport);

fn check<F>(name: &str, mut params: Vec<Tensor>, mut f: F) -> GradResult
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var, NumericError>,
{
    let report = grad_check(|t, v| f(t, v), &mut params, GRAD_H, GRAD_TOL).unwrap();
    (name.to_string(), report)
}

fn small_edges() -> Rc<EdgeIndex> {
    let s = random_snapshot(5, 0.5, &mut rng(3));
    Rc::new(attention_edges(&s))
}

fn model_error(e: ModelError) -> NumericError {
    match e {
        ModelError::Numeric(n) => n,
        other => NumericError::Unstable(other.to_string()),
    }
}

fn train_error(e: TrainError) -> NumericError {
    match e {
        TrainError::Numeric(n) => n,
        TrainError::Model(m) => model_error(m),
        other => NumericError::Unstable(other.to_string()),
    }
}

pub fn grad_dense_primitives() -> Vec<GradResult> {
    let mut r = rng(1);
    let a = random_tensor(3, 4, 1.0, &mut r);
    let b = random_tensor(4, 2, 1.0, &mut r);
    let c = random_tensor(3, 4, 1.0, &mut r);
    let bias = Tensor::new(vec![4], (0..4).map(|i| i as f64 * 0.3 - 0.5).collect()).unwrap();
    vec![
        check("matmul", vec![a.clone(), b], |t, v| {
            let m = t.matmul(v[0], v[1])?;
            weighted_sum(t, m, 10)
        }),
        check("add/mul/scale", vec![a.clone(), c.clone()], |t, v| {
            let s = t.add(v[0], v[1])?;
            let p = t.mul(s, v[0])?;
            let q = t.scale(p, -1.7);
            weighted_sum(t, q, 11)
        }),
        check("add_row", vec![a.clone(), bias], |t, v| {
            let s = t.add_row(v[0], v[1])?;
            weighted_sum(t, s, 12)
        }),
        check("mul_const", vec![a.clone()], |t, v| {
            let m = t.mul_const(v[0], (0..12).map(|i| (i % 3) as f64).collect())?;
            weighted_sum(t, m, 13)
        }),
        check("activations", vec![a.clone()], |t, v| {
            let l = t.leaky_relu(v[0], 0.2);
            let e = t.elu(v[0]);
            let s = t.sigmoid(v[0]);
            let g = t.log_sigmoid(v[0]);
            let x = t.add(l, e)?;
            let y = t.mul(s, g)?;
            let z = t.add(x, y)?;
            weighted_sum(t, z, 14)
        }),
        check("concat/slice cols", vec![a.clone(), c.clone()], |t, v| {
            let cat = t.concat_cols(&[v[0], v[1]])?;
            let s = t.slice_cols(cat, 2, 7)?;
            weighted_sum(t, s, 15)
        }),
        check("concat/slice rows", vec![a.clone(), c.clone()], |t, v| {
            let cat = t.concat_rows(&[v[0], v[1]])?;
            let s = t.slice_rows(cat, 1, 5)?;
            weighted_sum(t, s, 16)
        }),
        check("gather/row_dot", vec![a, c], |t, v| {
            let g = t.gather_rows(v[0], Rc::new(vec![2, 0, 2, 1]))?;
            let h = t.gather_rows(v[1], Rc::new(vec![1, 1, 0, 2]))?;
            let d = t.row_dot(g, h)?;
            weighted_sum(t, d, 17)
        }),
    ]
}

pub fn grad_masked_softmax() -> Vec<GradResult> {
    let mask = Rc::new(build_causal_mask(3).m);
    let x = random_tensor(6, 3, 2.0, &mut rng(2));
    vec![check("masked_softmax_rows", vec![x], |t, v| {
        let s = t.masked_softmax_rows(v[0], Rc::clone(&mask))?;
        weighted_sum(t, s, 20)
    })]
}

pub fn grad_graph_primitives() -> Vec<GradResult> {
    let e = small_edges();
    let mut r = rng(4);
    let mut column = |len: usize| {
        Tensor::new(vec![len], (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
    };
    let src = column(5).reshape(vec![5, 1]).unwrap();
    let dst = column(5).reshape(vec![5, 1]).unwrap();
    let coef = column(e.num_entries());
    let h = random_tensor(5, 3, 1.0, &mut r);
    vec![
        check("edge_scores", vec![src, dst], |t, v| {
            let s = t.edge_scores(v[0], v[1], Rc::clone(&e))?;
            weighted_sum(t, s, 30)
        }),
        check("segment_softmax", vec![coef.clone()], |t, v| {
            let s = t.segment_softmax(v[0], Rc::clone(&e))?;
            weighted_sum(t, s, 31)
        }),
        check("aggregate", vec![coef, h], |t, v| {
            let s = t.aggregate(v[0], v[1], Rc::clone(&e))?;
            weighted_sum(t, s, 32)
        }),
    ]
}

pub fn grad_block_primitives() -> Vec<GradResult> {
    let mut r = rng(5);
    let a = random_tensor(6, 2, 1.0, &mut r);
    let b = random_tensor(6, 2, 1.0, &mut r);
    let p = random_tensor(6, 3, 1.0, &mut r);
    vec![
        check("block_matmul_nt", vec![a, b.clone()], |t, v| {
            let s = t.block_matmul_nt(v[0], v[1], 3)?;
            weighted_sum(t, s, 40)
        }),
        check("block_matmul", vec![p, b], |t, v| {
            let s = t.block_matmul(v[0], v[1], 3)?;
            weighted_sum(t, s, 41)
        }),
    ]
}

/// Two-head structural layer on one-hot (sparse) and dense input.
pub fn grad_structural_layer() -> Vec<GradResult> {
    let e = small_edges();
    let mut r = rng(6);
    [false, true]
        .into_iter()
        .map(|dense| {
            let x = random_tensor(5, 3, 1.0, &mut r);
            let d = if dense { 3 } else { 5 };
            let mut params = vec![x];
            for _ in 0..2 {
                params.push(random_tensor(d, 2, 1.0, &mut r));
                params.push(random_tensor(4, 1, 1.0, &mut r).reshape(vec![4]).unwrap());
            }
            let name = if dense { "structural layer (dense)" } else { "structural layer (one-hot)" };
            check(name, params, |t, v| {
                let mut ctx = ForwardCtx::eval(t);
                let input = dense.then_some(v[0]);
                let heads = [(v[1], v[2]), (v[3], v[4])];
                let out = structural_layer(&mut ctx, input, &e, &heads, 0, 0, 0.2, 0.0)
                    .map_err(model_error)?;
                weighted_sum(t, out, 50)
            })
        })
        .collect()
}

pub fn grad_temporal_layer() -> Vec<GradResult> {
    let mut r = rng(7);
    let steps = 3;
    let mask = Rc::new(build_causal_mask(steps).m);
    let mut params = vec![random_tensor(2 * steps, 4, 1.0, &mut r)];
    for _ in 0..2 * 3 {
        params.push(random_tensor(4, 2, 1.0, &mut r));
    }
    vec![check("temporal layer", params, |t, v| {
        let mut ctx = ForwardCtx::eval(t);
        let heads = [[v[1], v[2], v[3]], [v[4], v[5], v[6]]];
        let out = temporal_layer(&mut ctx, v[0], steps, &heads, &mask, 0, 0.0).map_err(model_error)?;
        weighted_sum(t, out, 60)
    })]
}

/// The context loss differentiated through structural attention, position
/// embeddings, temporal attention and the head, on 4 nodes and 2 steps,
/// with respect to every model parameter.
pub fn grad_full_model_loss() -> Vec<GradResult> {
    let mut r = rng(8);
    let seq = random_sequence(4, 2, 0.7, &mut r);
    let config = ModelConfig {
        structural_layers: vec![HeadSpec::new(2, 2)],
        temporal_layers: vec![HeadSpec::new(2, 2)],
        final_dim: 3,
        ..ModelConfig::default().without_dropout()
    };
    let edges = edges_of(&seq);
    let dense = FeatureMatrix::Dense(random_tensor(4, 3, 1.0, &mut r));
    [FeatureMatrix::OneHot(4), dense]
        .into_iter()
        .map(|features| {
            let params = random_params(&config, features.dim(), 2, &mut r);
            let mut batch = LossBatch::default();
            for t in 0..2 {
                for v in 0..4 {
                    let u = (v + 1 + t) % 4;
                    let negs: Vec<usize> = (0..2).map(|_| r.gen_range(0..4)).collect();
                    batch.push(4, t, v, u, &negs);
                }
            }
            let mut tensors: Vec<Tensor> = params.tensors().into_iter().cloned().collect();
            let total: usize = tensors.iter().map(Tensor::len).sum();
            let report = grad_check(
                |t, v| {
                    let vars = ModelVars::from_flat(&params, v);
                    let mut ctx = ForwardCtx::eval(t);
                    let input = ForwardInput {
                        features: &features,
                        history: &[],
                        snapshots: &edges,
                    };
                    let out = forward(&mut ctx, &vars, &config, &input).map_err(model_error)?;
                    context_loss_on_tape(t, out.embeddings, &batch, 0.7).map_err(train_error)
                },
                &mut tensors,
                GRAD_H,
                GRAD_TOL,
            )
            .unwrap();
            assert_eq!(report.checked, total, "every parameter entry is checked");
            let name = match features {
                FeatureMatrix::OneHot(_) => "full-model loss (one-hot)",
                FeatureMatrix::Dense(_) => "full-model loss (dense)",
            };
            (name.to_string(), report)
        })
        .collect()
}

pub fn gradient_suite() -> Vec<GradResult> {
    [
        grad_dense_primitives(),
        grad_masked_softmax(),
        grad_graph_primitives(),
        grad_block_primitives(),
        grad_structural_layer(),
        grad_temporal_layer(),
        grad_full_model_loss(),
    ]
    .concat()
}

pub fn assert_all_pass(results: &[GradResult]) {
    for (name, report) in results {
        assert!(
            report.passed,
            "{name}: max relative error {:.3e} at {:?}",
            report.max_rel_error, report.worst
        );
    }
}
