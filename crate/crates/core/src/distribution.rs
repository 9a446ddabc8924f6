use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Token};

/// Entry-sum tolerance for a valid distribution.
pub const SUM_TOLERANCE: f64 = 1e-6;

/// Probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    /// Validates non-negativity, finiteness and unit sum (within
    /// [`SUM_TOLERANCE`]).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty probability vector".into()));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!("entry {i} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Softmax of `logits`, computed with the max subtracted.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| libm_exp(l - max)).collect();
        let z: f64 = exps.iter().sum();
        Self::new(exps.into_iter().map(|e| e / z).collect())
    }

    pub fn one_hot(len: usize, token: Token) -> Result<Self> {
        let mut probs = alloc::vec![0.0; len];
        *probs
            .get_mut(token as usize)
            .ok_or_else(|| Error::InvalidDistribution(format!("token {token} out of range {len}")))? = 1.0;
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.probs
    }

    /// Most probable token; the lowest id wins ties.
    pub fn argmax(&self) -> Token {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best as Token
    }

    pub fn max_prob(&self) -> f64 {
        self.probs[self.argmax() as usize]
    }
}

fn libm_exp(x: f64) -> f64 {
    num_traits::Float::exp(x)
}
