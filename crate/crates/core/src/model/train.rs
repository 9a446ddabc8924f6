use alloc::vec;

use num_traits::Float;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, ModelConfig, ModelParams, Real};
use crate::{Error, Result, Token};

/// One training sequence. Next-token targets are scored from position
/// `loss_start` onward; targets equal to `ignore_token` never contribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub tokens: Vec<Token>,
    #[serde(default)]
    pub loss_start: usize,
}

impl Sequence {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self {
            tokens,
            loss_start: 0,
        }
    }

    fn targets(&self, ignore: Option<Token>) -> Vec<Option<Token>> {
        let n = self.tokens.len();
        (0..n)
            .map(|t| {
                if t + 1 >= n || t < self.loss_start {
                    return None;
                }
                let next = self.tokens[t + 1];
                (Some(next) != ignore).then_some(next)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Token excluded from training targets (the padding id).
    pub ignore_token: Option<Token>,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            steps: 200,
            learning_rate: 3e-3,
            batch_size: 8,
            seed: 0,
            ignore_token: None,
            clip_norm: Some(1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F = f64> {
    pub params: ModelParams<F>,
    /// Mean batch loss of each step, before that step's update.
    pub losses: Vec<f64>,
}

/// Adam with bias correction.
struct Adam<F> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<F>,
    v: Vec<F>,
    step: i32,
}

impl<F: Real> Adam<F> {
    fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![F::zero(); len],
            v: vec![F::zero(); len],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [F], grad: &[F]) {
        self.step += 1;
        let (b1, b2) = (F::of(self.beta1), F::of(self.beta2));
        let c1 = F::of(1.0 - Float::powi(self.beta1, self.step));
        let c2 = F::of(1.0 - Float::powi(self.beta2, self.step));
        let lr = F::of(self.lr);
        let eps = F::of(self.eps);
        for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (F::one() - b1) * g;
            *v = b2 * *v + (F::one() - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p = *p - lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Trains a freshly initialized model (seeded by `options.seed`) with
/// next-token cross-entropy. Every forward pass uses `config.train_base`.
///
/// Each step draws `batch_size` sequences uniformly with replacement from
/// `dataset` using the same seeded generator, so a fixed seed reproduces the
/// run exactly.
pub fn train<F: Real>(config: &ModelConfig, dataset: &[Sequence], options: &TrainOptions) -> Result<TrainOutcome<F>> {
    let mut params = ModelParams::<F>::init(config, options.seed)?;
    if options.steps == 0 {
        return Ok(TrainOutcome {
            params,
            losses: Vec::new(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("training dataset is empty".into()));
    }
    if options.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    if !(options.learning_rate.is_finite() && options.learning_rate > 0.0) {
        return Err(Error::InvalidConfig("learning_rate must be positive".into()));
    }
    if let Some(seq) = dataset.iter().find(|s| s.tokens.len() > config.max_context) {
        return Err(Error::ContextOverflow {
            len: seq.tokens.len(),
            max_context: config.max_context,
        });
    }

    let targets: Vec<Vec<Option<Token>>> = dataset.iter().map(|s| s.targets(options.ignore_token)).collect();
    // Batch sampling uses its own stream so it never aliases initialization.
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    rng.set_stream(1);
    let mut adam = Adam::<F>::new(params.len(), options.learning_rate);
    let mut losses = Vec::with_capacity(options.steps);
    let inv_batch = F::of(1.0 / options.batch_size as f64);

    for step in 0..options.steps {
        let mut grad = vec![F::zero(); params.len()];
        let mut loss = 0.0;
        for _ in 0..options.batch_size {
            let i = rng.random_range(0..dataset.len());
            let (l, g) = loss_and_grad(&params, &dataset[i].tokens, &targets[i], config.train_base)
                .map_err(|e| match e {
                    Error::NonFinite { .. } => Error::Divergence { step, loss: f64::NAN },
                    other => other,
                })?;
            loss += l;
            for (acc, gi) in grad.iter_mut().zip(g) {
                *acc = *acc + gi * inv_batch;
            }
        }
        loss /= options.batch_size as f64;
        if !loss.is_finite() {
            return Err(Error::Divergence { step, loss });
        }
        losses.push(loss);
        if let Some(clip) = options.clip_norm {
            let norm = Float::sqrt(grad.iter().map(|g| g.as_f64() * g.as_f64()).sum::<f64>());
            if norm > clip {
                let s = F::of(clip / norm);
                grad.iter_mut().for_each(|g| *g = *g * s);
            }
        }
        adam.update(params.as_mut_slice(), &grad);
        if params.as_slice().iter().any(|p| !p.is_finite()) {
            return Err(Error::Divergence { step, loss });
        }
    }
    Ok(TrainOutcome { params, losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 6,
            model_dim: 8,
            head_dim: 4,
            n_heads: 2,
            n_layers: 1,
            max_context: 12,
            train_base: 10_000.0,
        }
    }

    fn corpus() -> Vec<Sequence> {
        // A fixed cycle the model can learn quickly.
        let cycle = [1u32, 2, 3, 4, 5];
        (0..5)
            .map(|s| Sequence::new((0..10).map(|i| cycle[(s + i) % 5]).collect()))
            .collect()
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let opts = TrainOptions {
            steps: 0,
            seed: 11,
            ..Default::default()
        };
        let out = train::<f64>(&cfg(), &corpus(), &opts).unwrap();
        assert_eq!(out.params, ModelParams::init(&cfg(), 11).unwrap());
        assert!(out.losses.is_empty());
    }

    #[test]
    fn fixed_seed_is_reproducible_and_loss_drops() {
        let opts = TrainOptions {
            steps: 60,
            learning_rate: 1e-2,
            batch_size: 2,
            seed: 5,
            ..Default::default()
        };
        let a = train::<f64>(&cfg(), &corpus(), &opts).unwrap();
        let b = train::<f64>(&cfg(), &corpus(), &opts).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.losses, b.losses);
        let first = a.losses[0];
        let last = *a.losses.last().unwrap();
        assert!(last < 0.5 * first, "loss {first} -> {last}");
    }

    #[test]
    fn targets_skip_prefix_and_ignored_token() {
        let s = Sequence {
            tokens: alloc::vec![1, 0, 2, 3],
            loss_start: 1,
        };
        assert_eq!(s.targets(Some(0)), alloc::vec![None, Some(2), Some(3), None]);
        assert_eq!(s.targets(None), alloc::vec![None, Some(2), Some(3), None]);
        let s = Sequence::new(alloc::vec![1, 0, 2]);
        assert_eq!(s.targets(Some(0)), alloc::vec![None, Some(2), None]);
    }

    #[test]
    fn divergence_aborts() {
        let opts = TrainOptions {
            steps: 5,
            learning_rate: f64::MAX,
            batch_size: 1,
            seed: 1,
            clip_norm: None,
            ..Default::default()
        };
        assert!(matches!(
            train::<f64>(&cfg(), &corpus(), &opts),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn rejects_overlong_sequences() {
        let opts = TrainOptions {
            steps: 1,
            ..Default::default()
        };
        let data = alloc::vec![Sequence::new(alloc::vec![1; 13])];
        assert!(matches!(
            train::<f64>(&cfg(), &data, &opts),
            Err(Error::ContextOverflow { .. })
        ));
    }
}
