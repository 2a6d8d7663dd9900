//! Weighted discrete sampling.

use rand::Rng;

use crate::error::{Error, Result};

/// Vose alias table: O(n) build, O(1) draws from a fixed discrete
/// distribution.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<usize>,
}

impl AliasTable {
    /// Build from non-negative weights with a positive sum.
    pub fn new(weights: &[f64]) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("alias table weights"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
            return Err(Error::InvalidConfig(
                "alias weights must be non-negative with a positive sum".into(),
            ));
        }
        let n = weights.len();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0usize; n];
        let scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();

        let mut small: Vec<usize> = Vec::new();
        let mut large: Vec<usize> = Vec::new();
        for (i, &s) in scaled.iter().enumerate() {
            if s < 1.0 {
                small.push(i);
            } else {
                large.push(i);
            }
        }
        let mut scaled = scaled;
        while let (Some(&s), Some(&l)) = (small.last(), large.last()) {
            small.pop();
            large.pop();
            prob[s] = scaled[s];
            alias[s] = l;
            scaled[l] = (scaled[l] + scaled[s]) - 1.0;
            if scaled[l] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        for &i in large.iter().chain(small.iter()) {
            prob[i] = 1.0;
        }
        Ok(AliasTable { prob, alias })
    }

    /// Table over `counts^power`; power 3/4 is the word2vec negative-sampling
    /// distribution.
    pub fn unigram(counts: &[f64], power: f64) -> Result<Self> {
        let weights: Vec<f64> = counts.iter().map(|&c| c.powf(power)).collect();
        AliasTable::new(&weights)
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i]
        }
    }
}

/// Draw an index proportionally to `weights` by cumulative scan. Used where
/// the weights change every step and building a table would be wasted work.
pub fn weighted_choice<R: Rng>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        u -= w;
        if u <= 0.0 {
            return i;
        }
    }
    weights.len() - 1 // rounding fell off the end
}
