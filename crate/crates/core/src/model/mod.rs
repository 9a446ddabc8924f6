//! Miniature decoder-only transformer with rotary position embeddings.
//!
//! Parameters live in one flat buffer (see [`Layout`]) so that checkpoints,
//! optimizers and finite-difference checks can treat them as a single
//! vector. The rotary base is an argument of every forward call rather than
//! part of the parameters.

mod backward;
mod forward;
pub mod rope;
mod scalar;
mod train;

use alloc::format;
use alloc::vec::Vec;
use core::ops::Range;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use backward::loss_and_grad;
pub use forward::{forward, next_token_distribution};
pub use rope::{attention_scores, rotate};
pub use scalar::Real;
pub use train::{train, Sequence, TrainOptions, TrainOutcome};

/// Hidden width of the feed-forward block, as a multiple of `model_dim`.
pub const FFN_MULTIPLIER: usize = 4;

pub(crate) const NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub model_dim: usize,
    pub head_dim: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub max_context: usize,
    pub train_base: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            model_dim: 64,
            head_dim: 16,
            n_heads: 4,
            n_layers: 2,
            max_context: 256,
            train_base: 10_000.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: alloc::string::String| Err(Error::InvalidConfig(msg));
        if self.vocab_size == 0 || self.n_heads == 0 || self.n_layers == 0 {
            return fail(format!(
                "vocab_size, n_heads and n_layers must be positive: {self:?}"
            ));
        }
        if self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return fail(format!("head_dim must be even and positive, got {}", self.head_dim));
        }
        if self.model_dim != self.n_heads * self.head_dim {
            return fail(format!(
                "model_dim {} != n_heads {} * head_dim {}",
                self.model_dim, self.n_heads, self.head_dim
            ));
        }
        if self.max_context == 0 {
            return fail("max_context must be positive".into());
        }
        if !(self.train_base.is_finite() && self.train_base > 0.0) {
            return fail(format!("train_base must be positive, got {}", self.train_base));
        }
        Ok(())
    }

    pub fn ffn_dim(&self) -> usize {
        FFN_MULTIPLIER * self.model_dim
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }
}

/// Offsets of the weight matrices of one transformer block. All matrices
/// are row-major `[in, out]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    pub wq: Range<usize>,
    pub wk: Range<usize>,
    pub wv: Range<usize>,
    pub wo: Range<usize>,
    pub w1: Range<usize>,
    pub w2: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embed: Range<usize>,
    pub blocks: Vec<BlockLayout>,
    pub unembed: Range<usize>,
    pub len: usize,
}

impl Layout {
    fn new(cfg: &ModelConfig) -> Self {
        let d = cfg.model_dim;
        let h = cfg.ffn_dim();
        let mut cursor = 0;
        let mut take = |n: usize| {
            let r = cursor..cursor + n;
            cursor += n;
            r
        };
        let embed = take(cfg.vocab_size * d);
        let blocks = (0..cfg.n_layers)
            .map(|_| BlockLayout {
                wq: take(d * d),
                wk: take(d * d),
                wv: take(d * d),
                wo: take(d * d),
                w1: take(d * h),
                w2: take(h * d),
            })
            .collect();
        let unembed = take(d * cfg.vocab_size);
        Layout {
            embed,
            blocks,
            unembed,
            len: cursor,
        }
    }

    /// `(name, range, shape)` of every tensor, in storage order.
    pub fn tensors(&self, cfg: &ModelConfig) -> Vec<(alloc::string::String, Range<usize>, [usize; 2])> {
        let d = cfg.model_dim;
        let h = cfg.ffn_dim();
        let mut out = Vec::new();
        out.push(("embed".into(), self.embed.clone(), [cfg.vocab_size, d]));
        for (i, b) in self.blocks.iter().enumerate() {
            out.push((format!("blocks.{i}.wq"), b.wq.clone(), [d, d]));
            out.push((format!("blocks.{i}.wk"), b.wk.clone(), [d, d]));
            out.push((format!("blocks.{i}.wv"), b.wv.clone(), [d, d]));
            out.push((format!("blocks.{i}.wo"), b.wo.clone(), [d, d]));
            out.push((format!("blocks.{i}.w1"), b.w1.clone(), [d, h]));
            out.push((format!("blocks.{i}.w2"), b.w2.clone(), [h, d]));
        }
        out.push(("unembed".into(), self.unembed.clone(), [d, cfg.vocab_size]));
        out
    }
}

/// All model weights in one flat buffer ordered by [`Layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F = f64> {
    config: ModelConfig,
    layout: Layout,
    data: Vec<F>,
}

impl<F: Real> ModelParams<F> {
    /// Seeded initialization: every matrix entry is uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(layout.len);
        for (_, range, shape) in layout.tensors(config) {
            let bound = 1.0 / Float::sqrt(shape[0] as f64);
            for _ in range {
                data.push(F::of(rng.random_range(-bound..=bound)));
            }
        }
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn from_flat(config: &ModelConfig, data: Vec<F>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if data.len() != layout.len {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                layout.len,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                stage: if i < layout.embed.end { "embedding" } else { "parameters" },
                layer: None,
            });
        }
        Ok(Self {
            config: config.clone(),
            layout,
            data,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<F> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub(crate) fn tensor(&self, r: &Range<usize>) -> &[F] {
        &self.data[r.clone()]
    }
}
