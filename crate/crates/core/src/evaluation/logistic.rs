//! Downstream link classifier: L2-regularized logistic regression.

use rand::seq::SliceRandom;

use super::EvalError;
use crate::layers::Rng;
use crate::numeric::{sigmoid_scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticConfig {
    /// Penalty `l2 / 2 * |w|^2` added to the mean log-loss; the bias is
    /// not penalized.
    pub l2: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            tol: 1e-6,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

/// Fits by full-batch accelerated gradient descent with step `1/L`, where
/// `L` bounds the curvature of the objective. Stops when the gradient norm
/// drops below `tol` or after `max_iter` iterations.
pub fn logistic_fit(
    features: &Tensor,
    labels: &[bool],
    cfg: &LogisticConfig,
) -> Result<LogisticModel, EvalError> {
    let (n, d) = (features.rows(), features.cols());
    if n != labels.len() {
        return Err(EvalError::Input(format!("{n} rows for {} labels", labels.len())));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(EvalError::DegenerateSplit);
    }
    let x = features.data();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();

    // Largest eigenvalue of [X 1]^T [X 1] / n by power iteration, padded.
    let lipschitz = 0.25 * top_eigenvalue(x, n, d) * 1.05 + cfg.l2 + 1e-12;
    let step = 1.0 / lipschitz;

    let grad = |w: &[f64], b: f64, g: &mut [f64]| -> f64 {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut gb = 0.0;
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let z = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
            let r = (sigmoid_scalar(z) - y[i]) / n as f64;
            for (gj, &xj) in g.iter_mut().zip(row) {
                *gj += r * xj;
            }
            gb += r;
        }
        for (gj, &wj) in g.iter_mut().zip(w) {
            *gj += cfg.l2 * wj;
        }
        gb
    };

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let (mut w_prev, mut b_prev) = (w.clone(), b);
    let mut g = vec![0.0; d];
    let mut momentum = 1.0_f64;
    let mut grad_norm = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        // Gradient at the current iterate decides convergence.
        let gb_here = grad(&w, b, &mut g);
        grad_norm = (g.iter().map(|v| v * v).sum::<f64>() + gb_here * gb_here).sqrt();
        iterations = it;
        if grad_norm < cfg.tol {
            break;
        }
        let next_m = (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt()) / 2.0;
        let beta = (momentum - 1.0) / next_m;
        let look_w: Vec<f64> = w.iter().zip(&w_prev).map(|(a, p)| a + beta * (a - p)).collect();
        let look_b = b + beta * (b - b_prev);
        let gb = grad(&look_w, look_b, &mut g);
        w_prev.copy_from_slice(&w);
        b_prev = b;
        for ((wj, &lj), &gj) in w.iter_mut().zip(&look_w).zip(&g) {
            *wj = lj - step * gj;
        }
        b = look_b - step * gb;
        // restart momentum when the step points uphill
        let uphill: f64 = g
            .iter()
            .zip(w.iter().zip(&w_prev))
            .map(|(gj, (a, p))| gj * (a - p))
            .sum::<f64>()
            + gb * (b - b_prev);
        momentum = if uphill > 0.0 { 1.0 } else { next_m };
        iterations = it + 1;
    }
    if !grad_norm.is_finite() || w.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::Input("logistic regression diverged".into()));
    }
    Ok(LogisticModel {
        weights: w,
        bias: b,
        iterations,
        grad_norm,
    })
}

fn top_eigenvalue(x: &[f64], n: usize, d: usize) -> f64 {
    let dim = d + 1;
    let mut v = vec![1.0 / (dim as f64).sqrt(); dim];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut out = vec![0.0; dim];
        for i in 0..n {
            let row = &x[i * d..(i + 1) * d];
            let xv = row.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() + v[d];
            for (o, &xj) in out.iter_mut().zip(row) {
                *o += xv * xj;
            }
            out[d] += xv;
        }
        let norm = out.iter().map(|o| o * o).sum::<f64>().sqrt() / n as f64;
        if norm == 0.0 {
            return 0.0;
        }
        let converged = (norm - lambda).abs() <= 1e-9 * norm;
        lambda = norm;
        let scale = 1.0 / (norm * n as f64);
        v = out.into_iter().map(|o| o * scale).collect();
        if converged {
            break;
        }
    }
    lambda
}

/// Predicted link probabilities.
pub fn logistic_predict(model: &LogisticModel, features: &Tensor) -> Vec<f64> {
    (0..features.rows())
        .map(|i| {
            let z: f64 = features
                .row(i)
                .iter()
                .zip(&model.weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + model.bias;
            sigmoid_scalar(z)
        })
        .collect()
}

/// Shuffles example indices and returns `(train, rest)` with
/// `round(train_fraction * n)` training examples. Reshuffles until both
/// parts contain both classes; gives up with [`EvalError::DegenerateSplit`].
pub fn split_indices(
    labels: &[bool],
    train_fraction: f64,
    rng: &mut Rng,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let n = labels.len();
    let n_train = ((n as f64) * train_fraction).round() as usize;
    let both = |idx: &[usize]| idx.iter().any(|&i| labels[i]) && idx.iter().any(|&i| !labels[i]);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..100 {
        order.shuffle(rng);
        let (train, rest) = order.split_at(n_train.min(n));
        if both(train) && both(rest) {
            return Ok((train.to_vec(), rest.to_vec()));
        }
    }
    Err(EvalError::DegenerateSplit)
}
