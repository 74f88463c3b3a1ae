//! Elementwise activations and softmax kernels.

use super::{NumericError, Tensor};

pub fn leaky_relu(x: &Tensor, slope: f64) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn elu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { v.exp_m1() })
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Logistic function without overflow for large |x|.
pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Softmax of `logits + mask` for a 1-D input; `mask` entries are `0` or
/// `-inf`. Masked positions come out as exactly zero.
pub fn masked_softmax(logits: &Tensor, mask: &Tensor) -> Result<Tensor, NumericError> {
    if logits.len() != mask.len() {
        return Err(NumericError::Shape(format!(
            "mask of length {} for {} logits",
            mask.len(),
            logits.len()
        )));
    }
    let mut out = vec![0.0; logits.len()];
    masked_softmax_into(logits.data(), mask.data(), &mut out)?;
    Tensor::new(logits.shape().to_vec(), out)
}

pub(crate) fn masked_softmax_into(
    x: &[f64],
    mask: &[f64],
    out: &mut [f64],
) -> Result<(), NumericError> {
    if x
        .iter()
        .zip(mask)
        .any(|(&v, &m)| m != f64::NEG_INFINITY && !v.is_finite())
    {
        return Err(NumericError::Unstable("non-finite attention logit".into()));
    }
    let max = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m != f64::NEG_INFINITY)
        .map(|(&v, &m)| v + m)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(NumericError::DegenerateRow);
    }
    let mut total = 0.0;
    for ((o, &v), &m) in out.iter_mut().zip(x).zip(mask) {
        *o = if m == f64::NEG_INFINITY {
            0.0
        } else {
            let e = (v + m - max).exp();
            total += e;
            e
        };
    }
    for o in out.iter_mut() {
        *o /= total;
    }
    Ok(())
}

pub(crate) fn softmax_into(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}
