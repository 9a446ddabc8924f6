//! Greedy search for a set of rotary bases whose attention waveforms
//! interleave: each admitted base should put its peaks on the troughs of
//! the bases already chosen, and its troughs on their peaks.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::waveform::{find_extrema, ExtremaSet, RotaryConfig};
use crate::{Error, Result};

/// Extrema per base fed to the interleaving distance by default.
pub const DEFAULT_N_EXTREMA: usize = 4;
/// First extrema window length used by default.
pub const DEFAULT_INIT_PERIOD: usize = 12;

/// Grid `b_min + i * stride` for `0 < i <= (b_max - b_min) / stride`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub b_min: f64,
    pub b_max: f64,
    pub stride: f64,
    pub candidates: Vec<f64>,
}

pub fn build_space(b_min: f64, b_max: f64, stride: f64) -> Result<SearchSpace> {
    if !(b_min.is_finite() && b_max.is_finite() && stride.is_finite()) || b_min <= 0.0 || stride <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "bad search range ({b_min}, {b_max}, stride {stride})"
        )));
    }
    if b_max <= b_min {
        return Err(Error::InvalidConfig(format!("b_max {b_max} must exceed b_min {b_min}")));
    }
    let count = Float::floor((b_max - b_min) / stride) as usize;
    if count == 0 {
        return Err(Error::EmptySearchSpace);
    }
    let candidates = (1..=count).map(|i| b_min + i as f64 * stride).collect();
    Ok(SearchSpace {
        b_min,
        b_max,
        stride,
        candidates,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Each candidate peak against its nearest accumulated trough, and each
    /// candidate trough against its nearest accumulated peak.
    #[default]
    Nearest,
    /// Position `i` against position `i`, over the shorter list.
    IndexWise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSet {
    pub bases: Vec<f64>,
    pub accumulated_peaks: Vec<usize>,
    pub accumulated_troughs: Vec<usize>,
}

impl BaseSet {
    pub fn seeded(extrema: &ExtremaSet) -> Self {
        Self {
            bases: alloc::vec![extrema.base],
            accumulated_peaks: extrema.peaks.clone(),
            accumulated_troughs: extrema.troughs.clone(),
        }
    }

    pub fn admit(&mut self, extrema: &ExtremaSet) {
        self.bases.push(extrema.base);
        self.accumulated_peaks.extend_from_slice(&extrema.peaks);
        self.accumulated_troughs.extend_from_slice(&extrema.troughs);
    }
}

fn nearest_cost(from: &[usize], to: &[usize]) -> u64 {
    from.iter()
        .map(|&p| to.iter().map(|&t| p.abs_diff(t)).min().unwrap_or(0) as u64)
        .sum()
}

fn index_cost(a: &[usize], b: &[usize]) -> u64 {
    a.iter().zip(b).map(|(&x, &y)| x.abs_diff(y) as u64).sum()
}

/// Matching cost of a candidate against the accumulated extrema; zero means
/// the candidate's peaks and troughs land exactly on accumulated troughs
/// and peaks. Positions are integers, so the cost is exact.
pub fn interleave_distance(candidate: &ExtremaSet, accumulated: &BaseSet, pairing: Pairing) -> Result<u64> {
    if candidate.peaks.is_empty()
        || candidate.troughs.is_empty()
        || accumulated.accumulated_peaks.is_empty()
        || accumulated.accumulated_troughs.is_empty()
    {
        return Err(Error::NoExtrema);
    }
    let (p, t) = (&candidate.peaks, &candidate.troughs);
    let (pc, tc) = (&accumulated.accumulated_peaks, &accumulated.accumulated_troughs);
    Ok(match pairing {
        Pairing::Nearest => nearest_cost(p, tc) + nearest_cost(t, pc),
        Pairing::IndexWise => index_cost(p, tc) + index_cost(t, pc),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub n_bases: usize,
    pub n_extrema: usize,
    pub init_period: usize,
    pub pairing: Pairing,
}

/// One greedy round: every remaining candidate's distance and the winner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRound {
    pub admitted: f64,
    pub distances: Vec<(f64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub set: BaseSet,
    pub rounds: Vec<SearchRound>,
}

fn check_space(space: &SearchSpace, config: &RotaryConfig, n_bases: usize) -> Result<()> {
    if space.b_min < config.train_base {
        return Err(Error::InvalidConfig(format!(
            "b_min {} lies below the training base {}",
            space.b_min, config.train_base
        )));
    }
    if space.b_min != config.train_base {
        return Err(Error::InvalidConfig(format!(
            "b_min {} must equal the training base {}",
            space.b_min, config.train_base
        )));
    }
    if space.candidates.is_empty() {
        return Err(Error::EmptySearchSpace);
    }
    if n_bases == 0 {
        return Err(Error::InvalidConfig("n_bases must be at least 1".into()));
    }
    let available = space.candidates.len() + 1;
    if n_bases > available {
        return Err(Error::TooManyBases {
            requested: n_bases,
            available,
        });
    }
    Ok(())
}

/// Extrema of the training base followed by those of every candidate.
pub fn extrema_table(space: &SearchSpace, config: &RotaryConfig, n_extrema: usize, init_period: usize) -> Result<(ExtremaSet, Vec<ExtremaSet>)> {
    let seed = find_extrema(&config.with_base(config.train_base)?, n_extrema, init_period)?;
    let table = space
        .candidates
        .iter()
        .map(|&b| find_extrema(&config.with_base(b)?, n_extrema, init_period))
        .collect::<Result<Vec<_>>>()?;
    Ok((seed, table))
}

/// Greedy admission over precomputed extrema. Candidates are admitted at
/// most once; equal distances go to the smallest base.
pub fn greedy_search(seed: &ExtremaSet, table: &[ExtremaSet], n_bases: usize, pairing: Pairing) -> Result<SearchOutcome> {
    if n_bases == 0 {
        return Err(Error::InvalidConfig("n_bases must be at least 1".into()));
    }
    if n_bases > table.len() + 1 {
        return Err(Error::TooManyBases {
            requested: n_bases,
            available: table.len() + 1,
        });
    }
    let mut set = BaseSet::seeded(seed);
    let mut remaining: Vec<&ExtremaSet> = table.iter().collect();
    let mut rounds = Vec::with_capacity(n_bases - 1);
    while set.bases.len() < n_bases {
        let mut distances = Vec::with_capacity(remaining.len());
        let mut best: Option<(usize, u64)> = None;
        for (i, cand) in remaining.iter().enumerate() {
            let d = interleave_distance(cand, &set, pairing)?;
            distances.push((cand.base, d));
            let wins = match best {
                None => true,
                Some((j, bd)) => d < bd || (d == bd && cand.base < remaining[j].base),
            };
            if wins {
                best = Some((i, d));
            }
        }
        let (i, _) = best.ok_or(Error::EmptySearchSpace)?;
        let chosen = remaining.remove(i);
        set.admit(chosen);
        rounds.push(SearchRound {
            admitted: chosen.base,
            distances,
        });
    }
    Ok(SearchOutcome { set, rounds })
}

pub fn search_bases(space: &SearchSpace, config: &RotaryConfig, options: &SearchOptions) -> Result<SearchOutcome> {
    check_space(space, config, options.n_bases)?;
    let (seed, table) = extrema_table(space, config, options.n_extrema, options.init_period)?;
    greedy_search(&seed, &table, options.n_bases, options.pairing)
}
