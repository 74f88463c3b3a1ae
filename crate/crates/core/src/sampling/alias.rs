use rand::Rng as _;

use super::SamplingError;
use crate::layers::Rng;

/// Walker/Vose alias table for O(1) draws from a discrete distribution.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    pub fn new(weights: &[f64]) -> Result<Self, SamplingError> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
            return Err(SamplingError::EmptyDistribution);
        }
        let n = weights.len();
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| scaled[i] < 1.0);
        while !small.is_empty() && !large.is_empty() {
            let s = small.pop().expect("non-empty");
            let l = *large.last().expect("non-empty");
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding; zero-weight entries must never win
        for i in small.into_iter().chain(large) {
            prob[i] = if weights[i] > 0.0 { 1.0 } else { 0.0 };
            if weights[i] == 0.0 {
                alias[i] = weights.iter().position(|&w| w > 0.0).expect("positive total");
            }
        }
        Ok(Self { prob, alias })
    }

    pub fn sample(&self, rng: &mut Rng) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}
