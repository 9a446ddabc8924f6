use alloc::format;
use alloc::vec;

use num_traits::Float;
use alloc::vec::Vec;

use super::forward::{run, sigmoid};
use super::{ModelParams, Real};
use crate::{Error, Result, Token};

/// `dy[rows, cols] . w[inner, cols]^T`.
fn matmul_wt<F: Real>(dy: &[F], rows: usize, cols: usize, w: &[F], inner: usize) -> Vec<F> {
    let mut out = vec![F::zero(); rows * inner];
    for r in 0..rows {
        let dyr = &dy[r * cols..(r + 1) * cols];
        for i in 0..inner {
            let wi = &w[i * cols..(i + 1) * cols];
            out[r * inner + i] = dyr.iter().zip(wi).map(|(&a, &b)| a * b).sum();
        }
    }
    out
}

/// `dw[inner, cols] += x[rows, inner]^T . dy[rows, cols]`.
fn accumulate_xt_dy<F: Real>(x: &[F], rows: usize, inner: usize, dy: &[F], cols: usize, dw: &mut [F]) {
    for r in 0..rows {
        let dyr = &dy[r * cols..(r + 1) * cols];
        for i in 0..inner {
            let xi = x[r * inner + i];
            if xi == F::zero() {
                continue;
            }
            for (g, &d) in dw[i * cols..(i + 1) * cols].iter_mut().zip(dyr) {
                *g = *g + xi * d;
            }
        }
    }
}

/// Gradient through `n = x * inv_rms(x)` given the cached outputs.
fn rms_norm_backward<F: Real>(dn: &[F], n: &[F], inv: &[F], dim: usize) -> Vec<F> {
    let fd = F::of(dim as f64);
    let mut dx = Vec::with_capacity(dn.len());
    for ((dr, nr), &r) in dn.chunks(dim).zip(n.chunks(dim)).zip(inv) {
        let proj = dr.iter().zip(nr).map(|(&a, &b)| a * b).sum::<F>() / fd;
        dx.extend(dr.iter().zip(nr).map(|(&g, &v)| r * (g - v * proj)));
    }
    dx
}

fn add_into<F: Real>(acc: &mut [F], other: &[F]) {
    for (a, &b) in acc.iter_mut().zip(other) {
        *a = *a + b;
    }
}

/// Mean next-token cross-entropy over the positions whose target is `Some`,
/// and its gradient with respect to every parameter (flat, in layout order).
///
/// `targets[t]` is the token expected after `tokens[..=t]`.
pub fn loss_and_grad<F: Real>(
    params: &ModelParams<F>,
    tokens: &[Token],
    targets: &[Option<Token>],
    base: f64,
) -> Result<(f64, Vec<F>)> {
    if targets.len() != tokens.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} targets for {} tokens",
            targets.len(),
            tokens.len()
        )));
    }
    let cfg = params.config();
    let vocab = cfg.vocab_size;
    if let Some(bad) = targets.iter().flatten().find(|&&tk| tk as usize >= vocab) {
        return Err(Error::ShapeMismatch(format!("target {bad} outside vocabulary of {vocab}")));
    }
    let cache = run(params, tokens, base)?;
    let layout = params.layout();
    let mut grad = vec![F::zero(); layout.len];
    let count = targets.iter().filter(|t| t.is_some()).count();
    if count == 0 {
        return Ok((0.0, grad));
    }
    let t = cache.len;
    let d = cfg.model_dim;
    let hd = cfg.head_dim;
    let n_heads = cfg.n_heads;
    let ffn = cfg.ffn_dim();
    let inv_count = F::of(1.0 / count as f64);
    let scale = F::of(1.0 / Float::sqrt(hd as f64));

    let mut loss = 0.0;
    let mut dlogits = vec![F::zero(); t * vocab];
    for (pos, target) in targets.iter().enumerate() {
        let Some(target) = target else { continue };
        let row = &cache.probs[pos * vocab..(pos + 1) * vocab];
        loss -= Float::ln(row[*target as usize].as_f64());
        let drow = &mut dlogits[pos * vocab..(pos + 1) * vocab];
        for (g, &p) in drow.iter_mut().zip(row) {
            *g = p * inv_count;
        }
        drow[*target as usize] = drow[*target as usize] - inv_count;
    }
    loss /= count as f64;

    let unembed = params.tensor(&layout.unembed);
    accumulate_xt_dy(&cache.nf, t, d, &dlogits, vocab, &mut grad[layout.unembed.clone()]);
    let dnf = matmul_wt(&dlogits, t, vocab, unembed, d);
    let mut dx = rms_norm_backward(&dnf, &cache.nf, &cache.rf, d);

    for (bl, bc) in layout.blocks.iter().zip(&cache.blocks).rev() {
        // x_out = x_mid + silu(n2 W1) W2
        let mut dx_mid = dx.clone();
        accumulate_xt_dy(&bc.act, t, ffn, &dx, d, &mut grad[bl.w2.clone()]);
        let dact = matmul_wt(&dx, t, d, params.tensor(&bl.w2), ffn);
        let du: Vec<F> = dact
            .iter()
            .zip(&bc.u)
            .map(|(&g, &z)| {
                let s = sigmoid(z);
                g * s * (F::one() + z * (F::one() - s))
            })
            .collect();
        accumulate_xt_dy(&bc.n2, t, d, &du, ffn, &mut grad[bl.w1.clone()]);
        let dn2 = matmul_wt(&du, t, ffn, params.tensor(&bl.w1), d);
        add_into(&mut dx_mid, &rms_norm_backward(&dn2, &bc.n2, &bc.r2, d));

        // x_mid = x_in + attn(n1) Wo
        let mut dx_in = dx_mid.clone();
        accumulate_xt_dy(&bc.o, t, d, &dx_mid, d, &mut grad[bl.wo.clone()]);
        let d_o = matmul_wt(&dx_mid, t, d, params.tensor(&bl.wo), d);

        let mut dq = vec![F::zero(); t * d];
        let mut dk = vec![F::zero(); t * d];
        let mut dv = vec![F::zero(); t * d];
        let mut ds = vec![F::zero(); t];
        for h in 0..n_heads {
            let off = h * hd;
            for i in 0..t {
                let a = &bc.attn[(h * t + i) * t..(h * t + i) * t + i + 1];
                let doi = &d_o[i * d + off..i * d + off + hd];
                for (j, &aij) in a.iter().enumerate() {
                    let vj = &bc.v[j * d + off..j * d + off + hd];
                    ds[j] = doi.iter().zip(vj).map(|(&x, &y)| x * y).sum();
                    for (g, &x) in dv[j * d + off..j * d + off + hd].iter_mut().zip(doi) {
                        *g = *g + aij * x;
                    }
                }
                let mean = a.iter().zip(&ds).map(|(&x, &y)| x * y).sum::<F>();
                for (j, &aij) in a.iter().enumerate() {
                    let dscore = aij * (ds[j] - mean) * scale;
                    if dscore == F::zero() {
                        continue;
                    }
                    for c in 0..hd {
                        dq[i * d + off + c] = dq[i * d + off + c] + dscore * bc.k[j * d + off + c];
                        dk[j * d + off + c] = dk[j * d + off + c] + dscore * bc.q[i * d + off + c];
                    }
                }
            }
        }
        for pos in 0..t {
            for h in 0..n_heads {
                let span = pos * d + h * hd..pos * d + (h + 1) * hd;
                cache.table.apply(&mut dq[span.clone()], pos, true);
                cache.table.apply(&mut dk[span], pos, true);
            }
        }

        accumulate_xt_dy(&bc.n1, t, d, &dq, d, &mut grad[bl.wq.clone()]);
        accumulate_xt_dy(&bc.n1, t, d, &dk, d, &mut grad[bl.wk.clone()]);
        accumulate_xt_dy(&bc.n1, t, d, &dv, d, &mut grad[bl.wv.clone()]);
        let mut dn1 = matmul_wt(&dq, t, d, params.tensor(&bl.wq), d);
        add_into(&mut dn1, &matmul_wt(&dk, t, d, params.tensor(&bl.wk), d));
        add_into(&mut dn1, &matmul_wt(&dv, t, d, params.tensor(&bl.wv), d));
        add_into(&mut dx_in, &rms_norm_backward(&dn1, &bc.n1, &bc.r1, d));
        dx = dx_in;
    }

    let dembed = &mut grad[layout.embed.clone()];
    for (pos, &tok) in tokens.iter().enumerate() {
        let tok = tok as usize;
        add_into(&mut dembed[tok * d..(tok + 1) * d], &dx[pos * d..(pos + 1) * d]);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            stage: "loss",
            layer: None,
        });
    }
    Ok((loss, grad))
}
