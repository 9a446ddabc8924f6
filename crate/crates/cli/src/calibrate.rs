//! Grid search over `(n_extrema, init_period, pairing)` for the setting
//! under which the greedy base search best reproduces a list of target
//! base sets.

use std::collections::BTreeMap;

use anyhow::{ensure, Result};
use serde::{Deserialize, Serialize};

use abuckets_core::search::{build_space, greedy_search, Pairing};
use abuckets_core::waveform::{curve, scan_windows, ExtremaSet, ExtremumKind, RotaryConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub stride: f64,
    pub n_bases: usize,
    pub bases: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub b_min: f64,
    pub b_max: f64,
    pub head_dim: usize,
    pub max_context: usize,
    pub max_extrema: usize,
    pub max_period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub n_extrema: usize,
    pub init_period: usize,
    pub pairing: Pairing,
    /// Searched bases per target, in target order.
    pub found: Vec<Vec<f64>>,
    /// Target bases recovered per target (the training base excluded).
    pub matched: Vec<usize>,
    pub exact: usize,
}

impl Score {
    pub fn total(&self) -> usize {
        self.matched.iter().sum()
    }

    fn rank(&self) -> (usize, usize) {
        (self.exact, self.total())
    }
}

fn extrema_of(values: &[f64], base: f64, n: usize, w: usize) -> Option<ExtremaSet> {
    let windows = scan_windows(values, n, w).ok()?;
    let pick = |k| windows.iter().filter(|x| x.kind == k).map(|x| x.position).collect();
    Some(ExtremaSet {
        base,
        peaks: pick(ExtremumKind::Peak),
        troughs: pick(ExtremumKind::Trough),
    })
}

/// Scores every grid point where all bases admit `n` extrema, best first.
/// A run of consecutive `init_period`s yielding identical extrema is
/// reported once, at its smallest value.
pub fn calibrate(targets: &[Target], grid: &Grid) -> Result<Vec<Score>> {
    ensure!(!targets.is_empty(), "no calibration targets");
    let spaces = targets
        .iter()
        .map(|t| build_space(grid.b_min, grid.b_max, t.stride))
        .collect::<abuckets_core::Result<Vec<_>>>()?;
    let mut curves: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let base_cfg = RotaryConfig::new(grid.b_min, grid.head_dim, grid.max_context, grid.b_min)?;
    for b in spaces.iter().flat_map(|s| s.candidates.iter()).chain([&grid.b_min]) {
        if let std::collections::btree_map::Entry::Vacant(slot) = curves.entry(b.to_bits()) {
            slot.insert(curve(&base_cfg.with_base(*b)?)?.values);
        }
    }
    let mut scores = Vec::new();
    for n in 1..=grid.max_extrema {
        let mut previous: Option<Vec<ExtremaSet>> = None;
        for w in 2..=grid.max_period {
            let table: Option<Vec<ExtremaSet>> = curves
                .iter()
                .map(|(bits, values)| extrema_of(values, f64::from_bits(*bits), n, w))
                .collect();
            let Some(table) = table else { continue };
            if previous.as_ref() == Some(&table) {
                continue;
            }
            let by_base: BTreeMap<u64, &ExtremaSet> = table.iter().map(|e| (e.base.to_bits(), e)).collect();
            let seed = by_base[&grid.b_min.to_bits()];
            for pairing in [Pairing::Nearest, Pairing::IndexWise] {
                let mut found = Vec::new();
                let mut matched = Vec::new();
                let mut exact = 0;
                for (t, space) in targets.iter().zip(&spaces) {
                    let cands: Vec<ExtremaSet> = space.candidates.iter().map(|b| by_base[&b.to_bits()].clone()).collect();
                    let out = greedy_search(seed, &cands, t.n_bases, pairing)?;
                    let mut got = out.set.bases;
                    got.sort_by(f64::total_cmp);
                    let hits = got.iter().skip(1).filter(|b| t.bases.contains(b)).count();
                    let mut want = t.bases.clone();
                    want.sort_by(f64::total_cmp);
                    exact += usize::from(got == want);
                    matched.push(hits);
                    found.push(got);
                }
                scores.push(Score {
                    n_extrema: n,
                    init_period: w,
                    pairing,
                    found,
                    matched,
                    exact,
                });
            }
            previous = Some(table);
        }
    }
    scores.sort_by(|a, b| b.rank().cmp(&a.rank()).then(a.n_extrema.cmp(&b.n_extrema)).then(a.init_period.cmp(&b.init_period)));
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_a_self_generated_target() {
        let grid = Grid {
            b_min: 1_000.0,
            b_max: 3_000.0,
            head_dim: 16,
            max_context: 512,
            max_extrema: 2,
            max_period: 30,
        };
        let cfg = RotaryConfig::new(1_000.0, 16, 512, 1_000.0).unwrap();
        let space = build_space(1_000.0, 3_000.0, 250.0).unwrap();
        let opts = abuckets_core::search::SearchOptions {
            n_bases: 3,
            n_extrema: 2,
            init_period: 12,
            pairing: Pairing::Nearest,
        };
        let set = abuckets_core::search::search_bases(&space, &cfg, &opts).unwrap().set;
        let target = Target {
            stride: 250.0,
            n_bases: 3,
            bases: set.bases,
        };
        let scores = calibrate(&[target], &grid).unwrap();
        assert_eq!(scores[0].exact, 1);
        assert!(scores.iter().any(|s| s.n_extrema == 2 && s.init_period <= 12 && s.exact == 1));
    }
}
