//! Confidence-weighted decoding over several rotary bases.
//!
//! One decoding step evaluates the same context once per base, weights each
//! run by `softmax_j(max_v p_j(v))`, mixes the distributions with those
//! weights and picks the argmax of the mixture.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::distribution::SUM_TOLERANCE;
use crate::model::{self, ModelParams, Real};
use crate::{Error, Result, Token, TokenDistribution};

/// Anything that can produce a next-token distribution for a context under a
/// given rotary base.
pub trait LanguageModel: Sync {
    fn vocab_size(&self) -> usize;
    fn max_context(&self) -> usize;
    fn next_token_distribution(&self, context: &[Token], base: f64) -> Result<TokenDistribution>;
}

impl<F: Real> LanguageModel for ModelParams<F> {
    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn max_context(&self) -> usize {
        self.config().max_context
    }

    fn next_token_distribution(&self, context: &[Token], base: f64) -> Result<TokenDistribution> {
        model::next_token_distribution(self, context, base)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }

    fn max_context(&self) -> usize {
        (**self).max_context()
    }

    fn next_token_distribution(&self, context: &[Token], base: f64) -> Result<TokenDistribution> {
        (**self).next_token_distribution(context, base)
    }
}

/// Strategy for evaluating the per-base runs of one step. Implementations
/// must return results in `bases` order regardless of completion order.
pub trait RunExecutor {
    fn evaluate<M: LanguageModel + ?Sized>(
        &self,
        model: &M,
        context: &[Token],
        bases: &[f64],
    ) -> Vec<Result<TokenDistribution>>;
}

/// Evaluates runs one after another in base order.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl RunExecutor for Sequential {
    fn evaluate<M: LanguageModel + ?Sized>(
        &self,
        model: &M,
        context: &[Token],
        bases: &[f64],
    ) -> Vec<Result<TokenDistribution>> {
        bases
            .iter()
            .map(|&b| model.next_token_distribution(context, b))
            .collect()
    }
}

/// Softmax over each run's top probability, in run order.
pub fn confidence(distributions: &[TokenDistribution]) -> Result<Vec<f64>> {
    if distributions.is_empty() {
        return Err(Error::InvalidDistribution("no runs to weight".into()));
    }
    let tops: Vec<f64> = distributions.iter().map(TokenDistribution::max_prob).collect();
    let max = tops.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = tops.iter().map(|t| Float::exp(t - max)).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Entrywise convex combination `sum_j weights[j] * distributions[j]`.
pub fn mix(distributions: &[TokenDistribution], weights: &[f64]) -> Result<TokenDistribution> {
    if distributions.is_empty() || distributions.len() != weights.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} distributions for {} weights",
            distributions.len(),
            weights.len()
        )));
    }
    let vocab = distributions[0].len();
    if let Some(d) = distributions.iter().find(|d| d.len() != vocab) {
        return Err(Error::ShapeMismatch(format!(
            "distribution lengths differ: {vocab} vs {}",
            d.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidDistribution(format!("negative or non-finite weight in {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("weights sum to {total}")));
    }
    let mut out = alloc::vec![0.0; vocab];
    for (d, &w) in distributions.iter().zip(weights) {
        for (o, &p) in out.iter_mut().zip(d.probs()) {
            *o += w * p;
        }
    }
    TokenDistribution::new(out)
}

/// Full record of one ensemble decoding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStep {
    pub bases: Vec<f64>,
    pub per_run: Vec<TokenDistribution>,
    pub confidences: Vec<f64>,
    pub mixed: TokenDistribution,
    pub chosen: Token,
}

impl EnsembleStep {
    /// Argmax token of each run, in run order.
    pub fn per_run_top1(&self) -> Vec<Token> {
        self.per_run.iter().map(TokenDistribution::argmax).collect()
    }
}

fn check_bases(bases: &[f64]) -> Result<()> {
    if bases.is_empty() {
        return Err(Error::InvalidConfig("at least one rotary base is required".into()));
    }
    if let Some(b) = bases.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
        return Err(Error::InvalidConfig(format!("rotary base must be positive, got {b}")));
    }
    Ok(())
}

pub fn decode_step<M: LanguageModel + ?Sized>(model: &M, context: &[Token], bases: &[f64]) -> Result<EnsembleStep> {
    decode_step_with(model, context, bases, &Sequential)
}

/// One step over every base. Any failed run fails the whole step.
pub fn decode_step_with<M: LanguageModel + ?Sized, E: RunExecutor>(
    model: &M,
    context: &[Token],
    bases: &[f64],
    executor: &E,
) -> Result<EnsembleStep> {
    check_bases(bases)?;
    let per_run = executor
        .evaluate(model, context, bases)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    if per_run.len() != bases.len() {
        return Err(Error::ShapeMismatch(format!(
            "executor returned {} runs for {} bases",
            per_run.len(),
            bases.len()
        )));
    }
    let confidences = confidence(&per_run)?;
    let mixed = mix(&per_run, &confidences)?;
    let chosen = mixed.argmax();
    Ok(EnsembleStep {
        bases: bases.to_vec(),
        per_run,
        confidences,
        mixed,
        chosen,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub tokens: Vec<Token>,
    pub steps: Vec<EnsembleStep>,
    /// Generation stopped because the context reached the model's maximum
    /// length before `max_new_tokens` or the stop token.
    pub truncated: bool,
}

pub fn decode_sequence<M: LanguageModel + ?Sized>(
    model: &M,
    context: &[Token],
    bases: &[f64],
    max_new_tokens: usize,
    stop_token: Option<Token>,
) -> Result<Decoded> {
    decode_sequence_with(model, context, bases, max_new_tokens, stop_token, &Sequential)
}

/// Autoregressive ensemble decoding. The chosen token is appended to the
/// shared context after every step; generation ends at `stop_token`
/// (included in the output), after `max_new_tokens`, or when the context
/// is full.
pub fn decode_sequence_with<M: LanguageModel + ?Sized, E: RunExecutor>(
    model: &M,
    context: &[Token],
    bases: &[f64],
    max_new_tokens: usize,
    stop_token: Option<Token>,
    executor: &E,
) -> Result<Decoded> {
    if max_new_tokens == 0 {
        return Err(Error::InvalidConfig("max_new_tokens must be at least 1".into()));
    }
    check_bases(bases)?;
    if context.len() > model.max_context() {
        return Err(Error::ContextOverflow {
            len: context.len(),
            max_context: model.max_context(),
        });
    }
    let mut ctx = context.to_vec();
    let mut out = Decoded {
        tokens: Vec::new(),
        steps: Vec::new(),
        truncated: false,
    };
    while out.tokens.len() < max_new_tokens {
        if ctx.len() > model.max_context() {
            out.truncated = true;
            break;
        }
        let step = decode_step_with(model, &ctx, bases, executor)?;
        let tok = step.chosen;
        out.tokens.push(tok);
        out.steps.push(step);
        if Some(tok) == stop_token {
            break;
        }
        ctx.push(tok);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Greedy {
    pub tokens: Vec<Token>,
    pub truncated: bool,
}

/// Plain single-base greedy decoding, independent of the mixing path.
pub fn greedy_decode<M: LanguageModel + ?Sized>(
    model: &M,
    context: &[Token],
    base: f64,
    max_new_tokens: usize,
    stop_token: Option<Token>,
) -> Result<Greedy> {
    if max_new_tokens == 0 {
        return Err(Error::InvalidConfig("max_new_tokens must be at least 1".into()));
    }
    let mut ctx = context.to_vec();
    let mut tokens = Vec::new();
    let mut truncated = false;
    while tokens.len() < max_new_tokens {
        if ctx.len() > model.max_context() {
            truncated = true;
            break;
        }
        let tok = model.next_token_distribution(&ctx, base)?.argmax();
        tokens.push(tok);
        if Some(tok) == stop_token {
            break;
        }
        ctx.push(tok);
    }
    Ok(Greedy { tokens, truncated })
}
