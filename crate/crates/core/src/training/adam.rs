use super::TrainError;
use crate::numeric::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. `l2 * theta` is added to the gradient
/// of every tensor whose `decay` flag is set. Nothing is modified when any
/// gradient is non-finite.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[Vec<f64>],
    state: &mut AdamState,
    lr: f64,
    l2: f64,
    decay: &[bool],
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != decay.len()
    {
        return Err(TrainError::Config(format!(
            "adam_step: {} parameters, {} gradients, {} moments, {} decay flags",
            params.len(),
            grads.len(),
            state.m.len(),
            decay.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.len() != g.len() || state.m[i].len() != g.len() {
            return Err(TrainError::Config(format!(
                "adam_step: tensor {i} has {} values but {} gradient entries",
                p.len(),
                g.len()
            )));
        }
        let count = g.iter().filter(|x| !x.is_finite()).count();
        if count > 0 {
            return Err(TrainError::NonFiniteGradient {
                tensor: format!("#{i}"),
                count,
                len: g.len(),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let lambda = if decay[i] { l2 } else { 0.0 };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            let g = grads[i][j] + lambda * *x;
            m[j] = ADAM_BETA1 * m[j] + (1.0 - ADAM_BETA1) * g;
            v[j] = ADAM_BETA2 * v[j] + (1.0 - ADAM_BETA2) * g * g;
            *x -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}
