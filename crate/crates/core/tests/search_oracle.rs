use abuckets_core::search::{build_space, greedy_search, interleave_distance, search_bases, BaseSet, Pairing, SearchOptions};
use abuckets_core::waveform::{ExtremaSet, RotaryConfig};
use proptest::prelude::*;

/// Every candidate extremum against every accumulated one, keeping the
/// closest; written without the library's helpers.
fn brute_nearest(c: &ExtremaSet, acc: &BaseSet) -> u64 {
    let mut total = 0u64;
    for (from, to) in [(&c.peaks, &acc.accumulated_troughs), (&c.troughs, &acc.accumulated_peaks)] {
        for &x in from.iter() {
            let mut best = u64::MAX;
            for &y in to.iter() {
                let d = (x as i64 - y as i64).unsigned_abs();
                if d < best {
                    best = d;
                }
            }
            total += best;
        }
    }
    total
}

fn brute_index(c: &ExtremaSet, acc: &BaseSet) -> u64 {
    let mut total = 0u64;
    for (from, to) in [(&c.peaks, &acc.accumulated_troughs), (&c.troughs, &acc.accumulated_peaks)] {
        let n = from.len().min(to.len());
        for i in 0..n {
            total += (from[i] as i64 - to[i] as i64).unsigned_abs();
        }
    }
    total
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

prop_compose! {
    fn extrema(base: f64)(peaks in prop::collection::vec(0usize..500, 1..6), troughs in prop::collection::vec(0usize..500, 1..6)) -> ExtremaSet {
        ExtremaSet { base, peaks: sorted(peaks), troughs: sorted(troughs) }
    }
}

proptest! {
    #[test]
    fn distance_matches_exhaustive_pairing(c in extrema(2.0), a in extrema(1.0)) {
        let acc = BaseSet::seeded(&a);
        prop_assert_eq!(interleave_distance(&c, &acc, Pairing::Nearest).unwrap(), brute_nearest(&c, &acc));
        prop_assert_eq!(interleave_distance(&c, &acc, Pairing::IndexWise).unwrap(), brute_index(&c, &acc));
    }

    #[test]
    fn every_round_admits_a_minimum(seed in extrema(1.0), table in prop::collection::vec(extrema(0.0), 2..10), n in 1usize..6, idx in any::<bool>()) {
        let pairing = if idx { Pairing::IndexWise } else { Pairing::Nearest };
        let table: Vec<ExtremaSet> = table.into_iter().enumerate().map(|(i, mut e)| { e.base = 2.0 + i as f64; e }).collect();
        let n = n.min(table.len() + 1);
        let out = greedy_search(&seed, &table, n, pairing).unwrap();
        prop_assert_eq!(out.set.bases.len(), n);
        let mut acc = BaseSet::seeded(&seed);
        for round in &out.rounds {
            let brute = |e: &ExtremaSet| if idx { brute_index(e, &acc) } else { brute_nearest(e, &acc) };
            let remaining: Vec<&ExtremaSet> = table.iter().filter(|e| !acc.bases.contains(&e.base)).collect();
            let min = remaining.iter().map(|e| brute(e)).min().unwrap();
            let first = remaining.iter().filter(|e| brute(e) == min).map(|e| e.base).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(round.admitted, first);
            prop_assert_eq!(round.distances.len(), remaining.len());
            let admitted = table.iter().find(|e| e.base == round.admitted).unwrap();
            let before = acc.accumulated_peaks.len();
            acc.admit(admitted);
            prop_assert!(acc.accumulated_peaks.len() > before);
        }
        let mut uniq = out.set.bases.clone();
        uniq.sort_by(f64::total_cmp);
        uniq.dedup();
        prop_assert_eq!(uniq.len(), n);
    }
}

#[test]
fn identical_inputs_give_identical_sets() {
    let cfg = RotaryConfig::new(10_000.0, 128, 4096, 10_000.0).unwrap();
    let space = build_space(10_000.0, 30_000.0, 500.0).unwrap();
    let opts = SearchOptions {
        n_bases: 6,
        n_extrema: 3,
        init_period: 40,
        pairing: Pairing::Nearest,
    };
    let a = search_bases(&space, &cfg, &opts).unwrap();
    let b = search_bases(&space, &cfg, &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.set.bases[0], 10_000.0);
    assert!(a.set.bases.iter().all(|&b| b >= 10_000.0));
    let too_many = SearchOptions { n_bases: 42, ..opts };
    assert!(search_bases(&space, &cfg, &too_many).is_err());
    let all = SearchOptions { n_bases: 41, ..opts };
    assert_eq!(search_bases(&space, &cfg, &all).unwrap().set.bases.len(), 41);
}
