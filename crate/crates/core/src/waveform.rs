//! Upper bound of the rotary attention score and its peaks and troughs.
//!
//! With every query and key component equal to one, the rotated inner
//! product at relative distance `s` is `UB(s) = sum_j 2 cos(s * theta_j)`
//! with `theta_j = base^(-2j/d)`. The curve starts at `d` and oscillates
//! with a period that lengthens as `s` grows.
//!
//! Extrema are found by a chain of growing windows. Peak and trough windows
//! alternate: the first peak window opens at distance 0, every trough window
//! opens at the peak just found and every later peak window opens at the
//! trough just found. The `k`-th window of either kind has length
//! `floor(init_period * 1.5^k)` (at least 2).

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const WINDOW_GROWTH: f64 = 1.5;
pub const MIN_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotaryConfig {
    pub base: f64,
    pub head_dim: usize,
    pub max_context: usize,
    pub train_base: f64,
}

impl RotaryConfig {
    pub fn new(base: f64, head_dim: usize, max_context: usize, train_base: f64) -> Result<Self> {
        let cfg = Self {
            base,
            head_dim,
            max_context,
            train_base,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.head_dim == 0 || !self.head_dim.is_multiple_of(2) {
            return fail("head_dim must be even and positive");
        }
        if !(self.base.is_finite() && self.base > 0.0) {
            return fail("base must be positive and finite");
        }
        if !(self.train_base.is_finite() && self.train_base > 0.0) {
            return fail("train_base must be positive and finite");
        }
        if self.base < self.train_base {
            return fail("base must not be below train_base");
        }
        if self.max_context < 2 {
            return fail("max_context must be at least 2");
        }
        Ok(())
    }

    pub fn with_base(&self, base: f64) -> Result<Self> {
        Self::new(base, self.head_dim, self.max_context, self.train_base)
    }

    /// Rotation frequencies `base^(-2j/d)`.
    pub fn thetas(&self) -> Vec<f64> {
        let d = self.head_dim as f64;
        (0..self.head_dim / 2)
            .map(|j| Float::powf(self.base, -2.0 * j as f64 / d))
            .collect()
    }
}

fn sum_cos(distance: f64, thetas: &[f64]) -> f64 {
    thetas.iter().map(|&t| 2.0 * Float::cos(distance * t)).sum()
}

pub fn upper_bound(distance: usize, config: &RotaryConfig) -> Result<f64> {
    config.validate()?;
    if distance >= config.max_context {
        return Err(Error::InvalidConfig(alloc::format!(
            "distance {distance} outside max context {}",
            config.max_context
        )));
    }
    Ok(sum_cos(distance as f64, &config.thetas()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpperBoundCurve {
    pub config: RotaryConfig,
    pub values: Vec<f64>,
}

impl UpperBoundCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn curve(config: &RotaryConfig) -> Result<UpperBoundCurve> {
    config.validate()?;
    let thetas = config.thetas();
    let values = (0..config.max_context)
        .map(|s| sum_cos(s as f64, &thetas))
        .collect();
    Ok(UpperBoundCurve {
        config: *config,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremumKind {
    Peak,
    Trough,
}

/// One scanned window `[start, start + len)` and the extremum it produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchWindow {
    pub kind: ExtremumKind,
    pub start: usize,
    pub len: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremaSet {
    pub base: f64,
    pub peaks: Vec<usize>,
    pub troughs: Vec<usize>,
}

/// How many extrema of each kind to find and the first window length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtremaOptions {
    pub count: usize,
    pub init_period: usize,
}

/// Window lengths `init_period * 1.5^k`, rounded down, at least 2.
pub fn window_lengths(init_period: usize, n: usize) -> Vec<usize> {
    let mut w = init_period as f64;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push((Float::floor(w) as usize).max(MIN_WINDOW));
        w *= WINDOW_GROWTH;
    }
    out
}

/// Smallest index of the best value; `better(a, b)` is strict.
fn arg_best(values: &[f64], better: impl Fn(f64, f64) -> bool) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[best]) {
            best = i;
        }
    }
    best
}

/// Runs the alternating window chain over a precomputed curve and returns
/// every scanned window in order (peak, trough, peak, ...).
pub fn scan_windows(values: &[f64], n: usize, init_period: usize) -> Result<Vec<SearchWindow>> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one extremum".into()));
    }
    if init_period < MIN_WINDOW {
        return Err(Error::InvalidConfig("init_period must be at least 2".into()));
    }
    let lengths = window_lengths(init_period, n);
    let mut windows = Vec::with_capacity(2 * n);
    let mut start = 0;
    for (k, &len) in lengths.iter().enumerate() {
        for kind in [ExtremumKind::Peak, ExtremumKind::Trough] {
            let end = start + len;
            if end > values.len() {
                return Err(Error::WindowOverflow {
                    found: k,
                    wanted: n,
                    window_end: end,
                    max_context: values.len(),
                });
            }
            let slice = &values[start..end];
            let offset = match kind {
                ExtremumKind::Peak => arg_best(slice, |a, b| a > b),
                ExtremumKind::Trough => arg_best(slice, |a, b| a < b),
            };
            // Only the very first peak may sit on its window start (distance 0).
            if offset == 0 && !windows.is_empty() {
                return Err(Error::FlatWindow { start, len });
            }
            let position = start + offset;
            windows.push(SearchWindow {
                kind,
                start,
                len,
                position,
            });
            start = position;
        }
    }
    Ok(windows)
}

pub fn find_extrema(config: &RotaryConfig, n: usize, init_period: usize) -> Result<ExtremaSet> {
    let c = curve(config)?;
    let windows = scan_windows(&c.values, n, init_period)?;
    let pick = |kind| {
        windows
            .iter()
            .filter(|w| w.kind == kind)
            .map(|w| w.position)
            .collect()
    };
    Ok(ExtremaSet {
        base: config.base,
        peaks: pick(ExtremumKind::Peak),
        troughs: pick(ExtremumKind::Trough),
    })
}

pub fn find_peaks(config: &RotaryConfig, n: usize, init_period: usize) -> Result<Vec<usize>> {
    Ok(find_extrema(config, n, init_period)?.peaks)
}

pub fn find_troughs(config: &RotaryConfig, n: usize, init_period: usize) -> Result<Vec<usize>> {
    Ok(find_extrema(config, n, init_period)?.troughs)
}
