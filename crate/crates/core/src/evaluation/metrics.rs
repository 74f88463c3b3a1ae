//! ROC AUC as a rank statistic, and micro/macro aggregation.

use super::EvalError;

/// Probability that a random positive outranks a random negative, ties
/// counting one half. Computed from average ranks in `O(n log n)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::Input(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::Input("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps tied (half-integer) ranks exact.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1, average (i + j + 2) / 2
        let twice_avg = (i + j + 2) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        twice_rank_sum += twice_avg * pos_in_group;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // 2 * (concordant + ties / 2)
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

/// `(micro, macro)` over `(auc, example_count)` per step: micro weights
/// each step by its example count, macro weights steps equally.
pub fn aggregate(steps: &[(f64, usize)]) -> Option<(f64, f64)> {
    if steps.is_empty() {
        return None;
    }
    let total: usize = steps.iter().map(|s| s.1).sum();
    let macro_auc = steps.iter().map(|s| s.0).sum::<f64>() / steps.len() as f64;
    let micro_auc = if total == 0 {
        macro_auc
    } else {
        steps.iter().map(|&(a, n)| a * n as f64).sum::<f64>() / total as f64
    };
    Some((micro_auc, macro_auc))
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
