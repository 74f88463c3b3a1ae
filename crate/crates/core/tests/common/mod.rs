//! Random instances and explicit-loop reference implementations shared by
//! the integration tests.
#![allow(dead_code)]

pub mod checks;

use dysat::graph::{FeatureMatrix, Snapshot, SnapshotSequence};
use dysat::layers::{
    HeadSpec, ModelConfig, ModelParams, Rng, StructuralLayerParams, TemporalLayerParams,
};
use dysat::numeric::Tensor;
use dysat::sampling::SamplerConfig;
use dysat::training::TrainConfig;
use rand::{Rng as _, SeedableRng};

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::new(vec![rows, cols], data).unwrap()
}

/// Snapshot with each pair linked with probability `p`, weights in
/// `[0.5, 2)`.
pub fn random_snapshot(n: usize, p: f64, rng: &mut Rng) -> Snapshot {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v, rng.gen_range(0.5..2.0)));
            }
        }
    }
    Snapshot::from_edges(n, edges).unwrap()
}

pub fn random_sequence(n: usize, steps: usize, p: f64, rng: &mut Rng) -> SnapshotSequence {
    let snaps = (0..steps).map(|_| random_snapshot(n, p, rng)).collect();
    SnapshotSequence::new(n, snaps).unwrap()
}

/// Small architecture with random head counts and widths, dropout off.
pub fn random_config(rng: &mut Rng) -> ModelConfig {
    let spec = |r: &mut Rng| HeadSpec::new(r.gen_range(1..=3), r.gen_range(1..=3));
    ModelConfig {
        structural_layers: (0..rng.gen_range(1..=2)).map(|_| spec(rng)).collect(),
        temporal_layers: (0..rng.gen_range(1..=2)).map(|_| spec(rng)).collect(),
        final_dim: rng.gen_range(1..=4),
        ..ModelConfig::default().without_dropout()
    }
}

pub fn random_features(n: usize, rng: &mut Rng) -> FeatureMatrix {
    if rng.gen_bool(0.5) {
        FeatureMatrix::OneHot(n)
    } else {
        let d = rng.gen_range(1..=4);
        FeatureMatrix::Dense(random_tensor(n, d, 1.0, rng))
    }
}

/// Parameters with every tensor (including biases) drawn at random.
pub fn random_params(config: &ModelConfig, input_dim: usize, steps: usize, rng: &mut Rng) -> ModelParams {
    let p = ModelParams::init(config, input_dim, steps, rng).unwrap();
    let tensors = p
        .tensors()
        .into_iter()
        .map(|t| {
            let data = (0..t.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            Tensor::new(t.shape().to_vec(), data).unwrap()
        })
        .collect();
    p.with_tensors(tensors).unwrap()
}

pub fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `x W` for a dense `x` row.
fn project(x: &[f64], w: &Tensor) -> Vec<f64> {
    (0..w.cols())
        .map(|c| (0..w.rows()).map(|r| x[r] * w.get(r, c)).sum())
        .collect()
}

/// One structural attention layer, loop by loop: for node `v` over
/// `u` in its neighbors plus itself (self weight 1),
/// `e_uv = leaky(A_uv * a . [W x_u || W x_v])`, `alpha = softmax_u(e)`,
/// `h_v = elu(sum_u alpha_uv W x_u)`; heads concatenated.
pub fn structural_oracle(
    s: &Snapshot,
    x: &Tensor,
    layer: &StructuralLayerParams,
    slope: f64,
) -> Tensor {
    let n = s.num_nodes();
    let mut rows = vec![Vec::new(); n];
    for head in &layer.heads {
        let f = head.w.cols();
        let z: Vec<Vec<f64>> = (0..n).map(|v| project(x.row(v), &head.w)).collect();
        let a = head.a.data();
        for v in 0..n {
            let mut nbrs: Vec<(usize, f64)> = s.neighbors(v).to_vec();
            nbrs.push((v, 1.0));
            let logits: Vec<f64> = nbrs
                .iter()
                .map(|&(u, w)| leaky(w * (dot(&a[..f], &z[u]) + dot(&a[f..], &z[v])), slope))
                .collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for c in 0..f {
                let mut acc = 0.0;
                for (k, &(u, _)) in nbrs.iter().enumerate() {
                    acc += exps[k] / total * z[u][c];
                }
                rows[v].push(elu(acc));
            }
        }
    }
    Tensor::from_rows(&rows).unwrap()
}

/// One temporal attention layer over a single node's `T x D` sequence:
/// `beta_ij` proportional to `exp(q_i . k_j / sqrt(F))` over `j <= i`
/// within the window, `z_i = sum_j beta_ij v_j`; heads concatenated.
pub fn temporal_oracle(x: &Tensor, layer: &TemporalLayerParams, window: Option<usize>) -> Tensor {
    let t = x.rows();
    let w = window.unwrap_or(t);
    let mut rows = vec![Vec::new(); t];
    for head in &layer.heads {
        let f = head.w_q.cols();
        let q: Vec<Vec<f64>> = (0..t).map(|i| project(x.row(i), &head.w_q)).collect();
        let k: Vec<Vec<f64>> = (0..t).map(|i| project(x.row(i), &head.w_k)).collect();
        let v: Vec<Vec<f64>> = (0..t).map(|i| project(x.row(i), &head.w_v)).collect();
        for i in 0..t {
            let allowed: Vec<usize> = (0..=i).filter(|&j| i - j < w).collect();
            let scores: Vec<f64> = allowed
                .iter()
                .map(|&j| dot(&q[i], &k[j]) / (f as f64).sqrt())
                .collect();
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = exps.iter().sum();
            for c in 0..v[0].len() {
                let mut acc = 0.0;
                for (idx, &j) in allowed.iter().enumerate() {
                    acc += exps[idx] / total * v[j][c];
                }
                rows[i].push(acc);
            }
        }
    }
    Tensor::from_rows(&rows).unwrap()
}

/// The whole model by composition of the loop oracles; `[T, V, d]`.
pub fn model_oracle(
    seq: &SnapshotSequence,
    features: &FeatureMatrix,
    params: &ModelParams,
    config: &ModelConfig,
) -> Tensor {
    let n = seq.num_nodes();
    let steps = seq.len();
    let x0 = features.to_tensor();
    // h[t][v]
    let mut h: Vec<Tensor> = seq
        .snapshots()
        .iter()
        .map(|s| {
            let mut x = x0.clone();
            for layer in &params.structural {
                x = structural_oracle(s, &x, layer, config.leaky_slope);
            }
            x
        })
        .collect();
    if let Some(pos) = &params.position {
        for (t, ht) in h.iter_mut().enumerate() {
            for v in 0..n {
                for c in 0..ht.cols() {
                    ht.set(v, c, ht.get(v, c) + pos.get(t, c));
                }
            }
        }
    }
    let mut out = Vec::with_capacity(steps * n);
    let mut per_node: Vec<Tensor> = (0..n)
        .map(|v| Tensor::from_rows(&(0..steps).map(|t| h[t].row(v).to_vec()).collect::<Vec<_>>()).unwrap())
        .collect();
    for layer in &params.temporal {
        per_node = per_node
            .iter()
            .map(|x| temporal_oracle(x, layer, config.window))
            .collect();
    }
    for t in 0..steps {
        for node in per_node.iter() {
            let z = node.row(t);
            let e = project(z, &params.ff_w);
            out.extend(e.iter().zip(params.ff_b.data()).map(|(a, b)| a + b));
        }
    }
    let d = params.ff_w.cols();
    Tensor::new(vec![steps, n, d], out).unwrap()
}

/// `ln(max(sigmoid(x), 1e-12))`, evaluated without cancellation.
pub fn ln_sigmoid_clamped(x: f64) -> f64 {
    let ln = if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    };
    ln.max(1e-12f64.ln())
}

/// Context loss by explicit loops: `pairs[t]` lists `(v, u, negatives)`;
/// `ln(1 - sigmoid(x))` is evaluated as `ln(sigmoid(-x))`.
pub fn loss_oracle(
    emb: &Tensor,
    pairs: &[Vec<(usize, usize, Vec<usize>)>],
    w_n: f64,
) -> f64 {
    let (n, d) = (emb.shape()[1], emb.shape()[2]);
    let e = |t: usize, v: usize| &emb.data()[(t * n + v) * d..(t * n + v + 1) * d];
    let mut total = 0.0;
    for (t, step) in pairs.iter().enumerate() {
        for (v, u, negs) in step {
            total -= ln_sigmoid_clamped(dot(e(t, *u), e(t, *v)));
            for &m in negs {
                total -= w_n * ln_sigmoid_clamped(-dot(e(t, m), e(t, *v)));
            }
        }
    }
    total
}

/// Ten nodes, three snapshots; snapshot `t` is the perfect matching
/// `2i -- (2i + 1 + 2t) mod 10`, so every step has different partners.
pub fn rotating_matchings() -> SnapshotSequence {
    let n = 10;
    let snaps = (0..3)
        .map(|t| {
            Snapshot::from_edges(n, (0..n / 2).map(move |i| (2 * i, (2 * i + 1 + 2 * t) % n, 1.0)))
                .unwrap()
        })
        .collect();
    SnapshotSequence::new(n, snaps).unwrap()
}

pub fn toy_model() -> ModelConfig {
    ModelConfig {
        structural_layers: vec![HeadSpec::new(2, 4)],
        temporal_layers: vec![HeadSpec::new(2, 4)],
        final_dim: 8,
        ..ModelConfig::default().without_dropout()
    }
}

pub fn toy_train(seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 1e-2,
        w_n: 0.01,
        max_epochs: epochs,
        seed,
        sampler: SamplerConfig {
            walks_per_node: 2,
            walk_length: 3,
            window: 1,
            negatives_per_positive: 1,
            ..SamplerConfig::default()
        },
        ..TrainConfig::default()
    }
}

/// Concordant pairs plus half the ties, over all positive/negative pairs.
pub fn brute_force_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut twice = 0u64;
    let mut pairs = 0u64;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 2,
                    std::cmp::Ordering::Equal => 1,
                    std::cmp::Ordering::Less => 0,
                };
            }
        }
    }
    twice as f64 / (2 * pairs) as f64
}
