use alloc::format;
use alloc::vec;

use num_traits::Float;
use alloc::vec::Vec;

use super::rope::RotaryTable;
use super::{ModelParams, Real, NORM_EPS};
use crate::{Error, Result, Token, TokenDistribution};

/// `x[rows, inner] . w[inner, cols]`.
pub(crate) fn matmul<F: Real>(x: &[F], rows: usize, inner: usize, w: &[F], cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); rows * cols];
    for r in 0..rows {
        let xr = &x[r * inner..(r + 1) * inner];
        let or = &mut out[r * cols..(r + 1) * cols];
        for (i, &xi) in xr.iter().enumerate() {
            if xi == F::zero() {
                continue;
            }
            let wi = &w[i * cols..(i + 1) * cols];
            for (o, &wij) in or.iter_mut().zip(wi) {
                *o = *o + xi * wij;
            }
        }
    }
    out
}

/// Parameter-free RMS normalization of each row. Returns the normalized rows
/// and the per-row inverse RMS.
pub(crate) fn rms_norm<F: Real>(x: &[F], rows: usize, dim: usize) -> (Vec<F>, Vec<F>) {
    let eps = F::of(NORM_EPS);
    let n = F::of(dim as f64);
    let mut out = Vec::with_capacity(x.len());
    let mut inv = Vec::with_capacity(rows);
    for row in x.chunks(dim).take(rows) {
        let ms = row.iter().map(|&v| v * v).sum::<F>() / n;
        let r = (ms + eps).sqrt().recip();
        inv.push(r);
        out.extend(row.iter().map(|&v| v * r));
    }
    (out, inv)
}

pub(crate) fn sigmoid<F: Real>(x: F) -> F {
    (F::one() + (-x).exp()).recip()
}

pub(crate) fn silu<F: Real>(x: F) -> F {
    x * sigmoid(x)
}

pub(crate) fn softmax_in_place<F: Real>(row: &mut [F]) {
    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
    let mut z = F::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        z = z + *v;
    }
    for v in row.iter_mut() {
        *v = *v / z;
    }
}

pub(crate) struct BlockCache<F> {
    pub r1: Vec<F>,
    pub n1: Vec<F>,
    /// Rotated queries and keys, `[T, model_dim]`.
    pub q: Vec<F>,
    pub k: Vec<F>,
    pub v: Vec<F>,
    /// Attention probabilities `[head, query, key]`; entries above the
    /// diagonal stay zero.
    pub attn: Vec<F>,
    pub o: Vec<F>,
    pub r2: Vec<F>,
    pub n2: Vec<F>,
    pub u: Vec<F>,
    pub act: Vec<F>,
}

pub(crate) struct ForwardCache<F> {
    pub len: usize,
    pub table: RotaryTable<F>,
    pub blocks: Vec<BlockCache<F>>,
    pub rf: Vec<F>,
    pub nf: Vec<F>,
    /// Next-token probabilities `[T, vocab]`.
    pub probs: Vec<F>,
}

fn ensure_finite<F: Real>(values: &[F], stage: &'static str, layer: Option<usize>) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { stage, layer })
    }
}

pub(crate) fn run<F: Real>(params: &ModelParams<F>, tokens: &[Token], base: f64) -> Result<ForwardCache<F>> {
    let cfg = params.config();
    let t = tokens.len();
    if t == 0 {
        return Err(Error::ShapeMismatch("empty token sequence".into()));
    }
    if t > cfg.max_context {
        return Err(Error::ContextOverflow {
            len: t,
            max_context: cfg.max_context,
        });
    }
    if !(base.is_finite() && base > 0.0) {
        return Err(Error::InvalidConfig(format!("rotary base must be positive, got {base}")));
    }
    let d = cfg.model_dim;
    let hd = cfg.head_dim;
    let n_heads = cfg.n_heads;
    let ffn = cfg.ffn_dim();
    let layout = params.layout();
    let table = RotaryTable::new(hd, t, base);
    let scale = F::of(1.0 / Float::sqrt(hd as f64));

    let embed = params.tensor(&layout.embed);
    let mut x = Vec::with_capacity(t * d);
    for &tok in tokens {
        let tok = tok as usize;
        if tok >= cfg.vocab_size {
            return Err(Error::ShapeMismatch(format!(
                "token {tok} outside vocabulary of {}",
                cfg.vocab_size
            )));
        }
        x.extend_from_slice(&embed[tok * d..(tok + 1) * d]);
    }

    let mut blocks = Vec::with_capacity(layout.blocks.len());
    for (li, bl) in layout.blocks.iter().enumerate() {
        let (n1, r1) = rms_norm(&x, t, d);
        let mut q = matmul(&n1, t, d, params.tensor(&bl.wq), d);
        let mut k = matmul(&n1, t, d, params.tensor(&bl.wk), d);
        let v = matmul(&n1, t, d, params.tensor(&bl.wv), d);
        for pos in 0..t {
            for h in 0..n_heads {
                let span = pos * d + h * hd..pos * d + (h + 1) * hd;
                table.apply(&mut q[span.clone()], pos, false);
                table.apply(&mut k[span], pos, false);
            }
        }

        let mut attn = vec![F::zero(); n_heads * t * t];
        let mut o = vec![F::zero(); t * d];
        for h in 0..n_heads {
            let off = h * hd;
            for i in 0..t {
                let qi = &q[i * d + off..i * d + off + hd];
                let row = &mut attn[(h * t + i) * t..(h * t + i) * t + i + 1];
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &k[j * d + off..j * d + off + hd];
                    *s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<F>() * scale;
                }
                softmax_in_place(row);
                let oi = &mut o[i * d + off..i * d + off + hd];
                for (j, &a) in row.iter().enumerate() {
                    let vj = &v[j * d + off..j * d + off + hd];
                    for (oc, &vc) in oi.iter_mut().zip(vj) {
                        *oc = *oc + a * vc;
                    }
                }
            }
        }
        ensure_finite(&attn, "attention", Some(li))?;

        let proj = matmul(&o, t, d, params.tensor(&bl.wo), d);
        let x_mid: Vec<F> = x.iter().zip(&proj).map(|(&a, &b)| a + b).collect();
        let (n2, r2) = rms_norm(&x_mid, t, d);
        let u = matmul(&n2, t, d, params.tensor(&bl.w1), ffn);
        let act: Vec<F> = u.iter().map(|&z| silu(z)).collect();
        let down = matmul(&act, t, ffn, params.tensor(&bl.w2), d);
        x = x_mid.iter().zip(&down).map(|(&a, &b)| a + b).collect();
        ensure_finite(&x, "residual stream", Some(li))?;

        blocks.push(BlockCache {
            r1,
            n1,
            q,
            k,
            v,
            attn,
            o,
            r2,
            n2,
            u,
            act,
        });
    }

    let (nf, rf) = rms_norm(&x, t, d);
    let mut probs = matmul(&nf, t, d, params.tensor(&layout.unembed), cfg.vocab_size);
    ensure_finite(&probs, "logits", None)?;
    for row in probs.chunks_mut(cfg.vocab_size) {
        softmax_in_place(row);
    }
    Ok(ForwardCache {
        len: t,
        table,
        blocks,
        rf,
        nf,
        probs,
    })
}

fn row_distribution<F: Real>(row: &[F]) -> Result<TokenDistribution> {
    let probs: Vec<f64> = row.iter().map(|p| p.as_f64()).collect();
    // Renormalize in f64 so single-precision rows still sum to one.
    let z: f64 = probs.iter().sum();
    TokenDistribution::new(probs.into_iter().map(|p| p / z).collect())
}

/// Causal next-token distributions for every position of `tokens`, with
/// every attention layer rotating queries and keys under `base`.
pub fn forward<F: Real>(params: &ModelParams<F>, tokens: &[Token], base: f64) -> Result<Vec<TokenDistribution>> {
    let cache = run(params, tokens, base)?;
    cache
        .probs
        .chunks(params.config().vocab_size)
        .map(row_distribution)
        .collect()
}

/// Distribution over the token following `tokens`.
pub fn next_token_distribution<F: Real>(
    params: &ModelParams<F>,
    tokens: &[Token],
    base: f64,
) -> Result<TokenDistribution> {
    let cache = run(params, tokens, base)?;
    let v = params.config().vocab_size;
    row_distribution(&cache.probs[(cache.len - 1) * v..cache.len * v])
}
