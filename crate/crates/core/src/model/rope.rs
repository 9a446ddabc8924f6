//! Rotary position embedding.
//!
//! Coordinates `(2i, 2i + 1)` of a head vector at position `m` are rotated
//! by `m * theta_i` with `theta_i = base^(-2i / d)`.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;

use super::Real;
use crate::{Error, Result};

/// Rotation frequencies `base^(-2i/d)` for `i` in `0..d/2`.
pub fn frequencies(head_dim: usize, base: f64) -> Vec<f64> {
    (0..head_dim / 2)
        .map(|i| Float::powf(base, -2.0 * i as f64 / head_dim as f64))
        .collect()
}

/// Precomputed `(cos, sin)` of `position * theta_i`, row-major
/// `[position, i]`.
#[derive(Debug, Clone)]
pub struct RotaryTable<F> {
    half: usize,
    cos: Vec<F>,
    sin: Vec<F>,
}

impl<F: Real> RotaryTable<F> {
    pub fn new(head_dim: usize, positions: usize, base: f64) -> Self {
        let freqs = frequencies(head_dim, base);
        let half = freqs.len();
        let mut cos = Vec::with_capacity(positions * half);
        let mut sin = Vec::with_capacity(positions * half);
        for m in 0..positions {
            for &theta in &freqs {
                let angle = m as f64 * theta;
                cos.push(F::of(Float::cos(angle)));
                sin.push(F::of(Float::sin(angle)));
            }
        }
        Self { half, cos, sin }
    }

    /// Rotates `v` (length `head_dim`) in place by the angles of `position`.
    /// `inverse` rotates by the negated angles.
    pub fn apply(&self, v: &mut [F], position: usize, inverse: bool) {
        let row = position * self.half;
        for i in 0..self.half {
            let c = self.cos[row + i];
            let s = if inverse {
                -self.sin[row + i]
            } else {
                self.sin[row + i]
            };
            let (x0, x1) = (v[2 * i], v[2 * i + 1]);
            v[2 * i] = x0 * c - x1 * s;
            v[2 * i + 1] = x0 * s + x1 * c;
        }
    }
}

fn check_head(len: usize) -> Result<()> {
    if len == 0 || !len.is_multiple_of(2) {
        return Err(Error::ShapeMismatch(format!(
            "rotary vectors need an even, non-zero length, got {len}"
        )));
    }
    Ok(())
}

fn check_base(base: f64) -> Result<()> {
    if !(base.is_finite() && base > 0.0) {
        return Err(Error::InvalidConfig(format!("rotary base must be positive, got {base}")));
    }
    Ok(())
}

/// Applies the block-diagonal rotation `R_{theta, position}` to `vector`.
pub fn rotate<F: Real>(vector: &[F], position: usize, base: f64) -> Result<Vec<F>> {
    check_head(vector.len())?;
    check_base(base)?;
    let mut out = vector.to_vec();
    for (i, theta) in frequencies(vector.len(), base).into_iter().enumerate() {
        let angle = position as f64 * theta;
        let (s, c) = (F::of(Float::sin(angle)), F::of(Float::cos(angle)));
        let (x0, x1) = (out[2 * i], out[2 * i + 1]);
        out[2 * i] = x0 * c - x1 * s;
        out[2 * i + 1] = x0 * s + x1 * c;
    }
    Ok(out)
}

/// Pre-softmax scores `score[m][n] = (R_m q_m) . (R_n k_n)` where row `m`
/// of `queries` sits at position `m` and row `n` of `keys` at position `n`.
/// No causal mask is applied.
pub fn attention_scores<F: Real, Q: AsRef<[F]>, K: AsRef<[F]>>(
    queries: &[Q],
    keys: &[K],
    base: f64,
) -> Result<Vec<Vec<F>>> {
    check_base(base)?;
    let dim = match queries.first() {
        Some(q) => q.as_ref().len(),
        None => return Ok(Vec::new()),
    };
    check_head(dim)?;
    let rotated = |rows: &[&[F]]| -> Result<Vec<Vec<F>>> {
        rows.iter()
            .enumerate()
            .map(|(pos, row)| {
                if row.len() != dim {
                    return Err(Error::ShapeMismatch(format!(
                        "row at position {pos} has length {}, expected {dim}",
                        row.len()
                    )));
                }
                rotate(row, pos, base)
            })
            .collect()
    };
    let q_rows: Vec<&[F]> = queries.iter().map(|q| q.as_ref()).collect();
    let k_rows: Vec<&[F]> = keys.iter().map(|k| k.as_ref()).collect();
    let q = rotated(&q_rows)?;
    let k = rotated(&k_rows)?;
    Ok(q.iter()
        .map(|qm| {
            k.iter()
                .map(|kn| qm.iter().zip(kn).map(|(&a, &b)| a * b).sum())
                .collect()
        })
        .collect())
}
