//! Acceptance suite: one line per criterion, non-zero exit if any gating
//! criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use abuckets::calibrate::{calibrate, Grid, Target};
use abuckets_core::ensemble::{decode_sequence, greedy_decode};
use abuckets_core::kv::{generate_task, placement_rounds, training_set, evaluate, Decoder, KvShape, KvVocab, Placement};
use abuckets_core::model::{attention_scores, loss_and_grad, rotate, train, ModelConfig, ModelParams, TrainOptions};
use abuckets_core::search::{
    build_space, search_bases, BaseSet, Pairing, SearchOptions, DEFAULT_INIT_PERIOD, DEFAULT_N_EXTREMA,
};
use abuckets_core::waveform::{curve, find_extrema, upper_bound, ExtremaOptions, ExtremaSet, RotaryConfig};
use abuckets_core::{Error, Token};

struct Outcome {
    id: u8,
    name: &'static str,
    pass: bool,
    gating: bool,
    detail: String,
}

fn outcome(id: u8, name: &'static str, pass: bool, detail: String) -> Outcome {
    Outcome {
        id,
        name,
        pass,
        gating: true,
        detail,
    }
}

fn paper_rotary() -> RotaryConfig {
    RotaryConfig::new(10_000.0, 128, 4096, 10_000.0).unwrap()
}

fn default_options(n_bases: usize) -> SearchOptions {
    SearchOptions {
        n_bases,
        n_extrema: DEFAULT_N_EXTREMA,
        init_period: DEFAULT_INIT_PERIOD,
        pairing: Pairing::Nearest,
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

fn rows() -> [(f64, usize, Vec<f64>); 3] {
    [
        (500.0, 6, vec![10000.0, 17500.0, 18000.0, 19000.0, 20000.0, 25000.0]),
        (500.0, 7, vec![10000.0, 17500.0, 18000.0, 19000.0, 20000.0, 22500.0, 25000.0]),
        (1000.0, 7, vec![10000.0, 17000.0, 18000.0, 19000.0, 20000.0, 23000.0, 25000.0]),
    ]
}

fn searched(stride: f64, n: usize) -> Vec<f64> {
    let space = build_space(10_000.0, 30_000.0, stride).unwrap();
    sorted(search_bases(&space, &paper_rotary(), &default_options(n)).unwrap().set.bases)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (stride, n, want) = rows()[0].clone();
    let got = searched(stride, n);
    let took = start.elapsed();
    let pass = got == want && took < Duration::from_secs(10);
    outcome(
        1,
        "base-set reproduction (T=500, N=6)",
        pass,
        format!(
            "n_extrema={DEFAULT_N_EXTREMA} init_period={DEFAULT_INIT_PERIOD} nearest; got {got:?}, want {want:?}, {:.2?}",
            took
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut detail = Vec::new();
    let mut all = true;
    for (stride, n, want) in rows().into_iter().skip(1) {
        let got = searched(stride, n);
        all &= got == want;
        detail.push(format!("(N={n}, T={stride}) got {got:?}"));
    }
    if !all {
        // Per-row fallback: does any grid setting reproduce each row alone?
        let grid = Grid {
            b_min: 10_000.0,
            b_max: 30_000.0,
            head_dim: 128,
            max_context: 4096,
            max_extrema: 12,
            max_period: 1500,
        };
        for (stride, n, want) in rows() {
            let best = calibrate(&[Target { stride, n_bases: n, bases: want }], &grid).unwrap();
            let b = &best[0];
            detail.push(format!(
                "row (N={n}, T={stride}) best per-row setting n_extrema={} init_period={} {:?}: {}/{} matched{}",
                b.n_extrema,
                b.init_period,
                b.pairing,
                b.matched[0],
                n - 1,
                if b.exact == 1 { " (exact)" } else { "" }
            ));
        }
    }
    outcome(2, "Table 3 variants", all, detail.join("; "))
}

fn brute_distance(c: &ExtremaSet, acc: &BaseSet, pairing: Pairing) -> u64 {
    let mut total = 0u64;
    for (from, to) in [(&c.peaks, &acc.accumulated_troughs), (&c.troughs, &acc.accumulated_peaks)] {
        match pairing {
            Pairing::Nearest => {
                for &x in from.iter() {
                    total += to.iter().map(|&y| (x as i64 - y as i64).unsigned_abs()).min().unwrap();
                }
            }
            Pairing::IndexWise => {
                for i in 0..from.len().min(to.len()) {
                    total += (from[i] as i64 - to[i] as i64).unsigned_abs();
                }
            }
        }
    }
    total
}

fn criterion_3() -> Outcome {
    let space = build_space(10_000.0, 30_000.0, 500.0).unwrap();
    let cfg = paper_rotary();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut configs, mut rounds, mut violations, mut draws) = (0, 0, 0, 0);
    while configs < 100 && draws < 10_000 {
        draws += 1;
        let opts = SearchOptions {
            n_bases: rng.random_range(2..=8),
            n_extrema: rng.random_range(1..=6),
            init_period: rng.random_range(4..=200),
            pairing: if rng.random() { Pairing::Nearest } else { Pairing::IndexWise },
        };
        let out = match search_bases(&space, &cfg, &opts) {
            Ok(o) => o,
            Err(Error::WindowOverflow { .. } | Error::FlatWindow { .. }) => continue,
            Err(e) => panic!("{e}"),
        };
        configs += 1;
        let ex = |b: f64| find_extrema(&cfg.with_base(b).unwrap(), opts.n_extrema, opts.init_period).unwrap();
        let mut acc = BaseSet::seeded(&ex(10_000.0));
        for round in &out.rounds {
            rounds += 1;
            let mut best: Option<(u64, f64)> = None;
            for &b in space.candidates.iter().filter(|b| !acc.bases.contains(b)) {
                let d = brute_distance(&ex(b), &acc, opts.pairing);
                if best.is_none_or(|(bd, bb)| d < bd || (d == bd && b < bb)) {
                    best = Some((d, b));
                }
            }
            if best.map(|x| x.1) != Some(round.admitted) {
                violations += 1;
            }
            acc.admit(&ex(round.admitted));
        }
    }
    outcome(
        3,
        "greedy-step oracle",
        configs == 100 && violations == 0,
        format!("{configs} configs, {rounds} rounds, {violations} violations"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..10 {
        let d = 2 * rng.random_range(1..=128);
        let base = rng.random_range(100.0..1e6);
        let cfg = RotaryConfig::new(base, d, rng.random_range(16..=8192), 1.0).unwrap();
        let c = curve(&cfg).unwrap();
        violations += usize::from(upper_bound(0, &cfg).unwrap() != d as f64);
        violations += c.values.iter().filter(|v| v.abs() > d as f64).count();
    }
    outcome(4, "waveform endpoint and bound", violations == 0, format!("10 configs, {violations} violations"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut configs, mut checked, mut disagreements, mut draws) = (0, 0, 0, 0);
    while configs < 50 && draws < 10_000 {
        draws += 1;
        let d = [16, 32, 64, 128][rng.random_range(0..4)];
        let base = rng.random_range(1e3..1e5);
        let w = rng.random_range(4..=200);
        let n = rng.random_range(1..=6);
        let cfg = RotaryConfig::new(base, d, 4096, 1e3).unwrap();
        let Ok(e) = find_extrema(&cfg, n, w) else { continue };
        configs += 1;
        let values = curve(&cfg).unwrap().values;
        // Rebuild the window chain from its definition and scan each window.
        let mut start = 0;
        for k in 0..n {
            let len = ((w as f64 * 1.5f64.powi(k as i32)).floor() as usize).max(2);
            for (want_peak, got) in [(true, e.peaks[k]), (false, e.troughs[k])] {
                let mut best = start;
                for s in start..start + len {
                    let better = if want_peak { values[s] > values[best] } else { values[s] < values[best] };
                    if better {
                        best = s;
                    }
                }
                checked += 1;
                disagreements += usize::from(best != got);
                start = got;
            }
        }
    }
    outcome(
        5,
        "extrema oracle equivalence",
        configs == 50 && disagreements == 0,
        format!("{configs} configs, {checked} extrema, {disagreements} disagreements"),
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let d = 2 * rng.random_range(1..=64);
        let base = rng.random_range(10.0..1e6);
        let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (m, n) = (rng.random_range(0..4096usize), rng.random_range(0..4096usize));
        let lhs = dot(&rotate(&q, m, base).unwrap(), &rotate(&k, n, base).unwrap());
        // q . R_{n-m} k, with a negative offset moved onto q.
        let rhs = if n >= m {
            dot(&q, &rotate(&k, n - m, base).unwrap())
        } else {
            dot(&rotate(&q, m - n, base).unwrap(), &k)
        };
        worst = worst.max((lhs - rhs).abs());
    }
    let cfg = RotaryConfig::new(10_000.0, 128, 4096, 10_000.0).unwrap();
    let ones = vec![vec![1.0f64; 128]; 256];
    let scores = attention_scores(&ones, &ones, 10_000.0).unwrap();
    let mut cross = 0.0f64;
    for m in 0..256 {
        for n in 0..=m {
            cross = cross.max((scores[m][n] - upper_bound(m - n, &cfg).unwrap()).abs());
        }
    }
    for (m, n) in [(4095, 0), (4000, 17), (3071, 1024)] {
        let s = dot(&rotate(&ones[0], m, 10_000.0).unwrap(), &rotate(&ones[0], n, 10_000.0).unwrap());
        cross = cross.max((s - upper_bound(m - n, &cfg).unwrap()).abs());
    }
    outcome(
        6,
        "RoPE relative-position identity",
        worst < 1e-6 && cross < 1e-9,
        format!("max identity error {worst:.2e} (< 1e-6), max all-ones error {cross:.2e} (< 1e-9)"),
    )
}

fn small_model(seed: u64) -> ModelParams<f64> {
    let cfg = ModelConfig {
        vocab_size: 32,
        model_dim: 16,
        head_dim: 4,
        n_heads: 4,
        n_layers: 2,
        max_context: 64,
        train_base: 10_000.0,
    };
    ModelParams::init(&cfg, seed).unwrap()
}

fn criterion_7() -> Outcome {
    let model = small_model(7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut mismatches, mut perm_changes, mut steps, mut worst_sum) = (0, 0, 0, 0.0f64);
    for _ in 0..100 {
        let len = rng.random_range(1..=24);
        let ctx: Vec<Token> = (0..len).map(|_| rng.random_range(0..32)).collect();
        let b = rng.random_range(10_000.0..30_000.0);
        let single = decode_sequence(&model, &ctx, &[b], 8, None).unwrap();
        let plain = greedy_decode(&model, &ctx, b, 8, None).unwrap();
        mismatches += usize::from(single.tokens != plain.tokens);
        let mut bases: Vec<f64> = (0..rng.random_range(2..=5)).map(|_| 10_000.0 + 500.0 * rng.random_range(0..=40) as f64).collect();
        let a = decode_sequence(&model, &ctx, &bases, 8, None).unwrap();
        bases.shuffle(&mut rng);
        let p = decode_sequence(&model, &ctx, &bases, 8, None).unwrap();
        perm_changes += usize::from(a.tokens != p.tokens);
        for s in a.steps.iter().chain(&p.steps).chain(&single.steps) {
            steps += 1;
            worst_sum = worst_sum.max((s.mixed.probs().iter().sum::<f64>() - 1.0).abs());
        }
    }
    outcome(
        7,
        "ensemble reduction and symmetry",
        mismatches == 0 && perm_changes == 0 && worst_sum < 1e-6,
        format!("100 contexts: {mismatches} N=1 mismatches, {perm_changes} permutation changes, {steps} mixed steps with max |sum-1| {worst_sum:.1e}"),
    )
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 8,
        model_dim: 8,
        head_dim: 4,
        n_heads: 2,
        n_layers: 1,
        max_context: 8,
        train_base: 10_000.0,
    };
    let mut params = ModelParams::<f64>::init(&cfg, 8).unwrap();
    let tokens: Vec<Token> = vec![1, 5, 2, 7, 0, 3];
    let targets: Vec<Option<Token>> = tokens[1..].iter().map(|&t| Some(t)).chain([None]).collect();
    let (_, grad) = loss_and_grad(&params, &tokens, &targets, 10_000.0).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        let orig = params.as_slice()[i];
        params.as_mut_slice()[i] = orig + h;
        let (up, _) = loss_and_grad(&params, &tokens, &targets, 10_000.0).unwrap();
        params.as_mut_slice()[i] = orig - h;
        let (down, _) = loss_and_grad(&params, &tokens, &targets, 10_000.0).unwrap();
        params.as_mut_slice()[i] = orig;
        let fd = (up - down) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / (fd.abs() + grad[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    let took = start.elapsed();
    outcome(
        8,
        "gradient check",
        params.len() <= 1000 && worst < 1e-4 && took < Duration::from_secs(60),
        format!("{} parameters, max relative error {worst:.2e}, {took:.2?}", params.len()),
    )
}

fn criterion_9() -> Outcome {
    let vocab = KvVocab::new(64).unwrap();
    let rotary = RotaryConfig::new(10_000.0, 16, 256, 10_000.0).unwrap();
    let finder = ExtremaOptions {
        count: 5,
        init_period: 8,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut violations = 0;
    for i in 0..1000 {
        let pairs = rng.random_range(1..=4);
        let total = rng.random_range(96..=140);
        let task = generate_task(pairs, i, &vocab, KvShape::default(), total).unwrap();
        let Ok((peak, trough)) = placement_rounds(&task, &rotary, finder) else {
            violations += 1;
            continue;
        };
        let (pp, tp) = (peak.render(&vocab), trough.render(&vocab));
        violations += usize::from(pp.len() != tp.len() || pp.len() != total);
        for (t, p) in [(&peak, &pp), (&trough, &tp)] {
            let v = &t.target().value;
            let at = t.target_position;
            violations += usize::from(at + 1 < v.len() || p[at + 1 - v.len()..=at] != v[..]);
        }
        violations += usize::from(peak.placement != Placement::Peak || trough.placement != Placement::Trough);
    }
    outcome(9, "harness protocol fidelity", violations == 0, format!("1000 tasks, {violations} violations"))
}

fn criterion_10() -> Outcome {
    let start = Instant::now();
    let cfg = ModelConfig {
        vocab_size: 32,
        model_dim: 32,
        head_dim: 8,
        n_heads: 4,
        n_layers: 2,
        max_context: 128,
        train_base: 10_000.0,
    };
    let vocab = KvVocab::new(32).unwrap();
    let shape = KvShape {
        key_len: 2,
        value_len: 2,
    };
    let total = 48;
    let finder = ExtremaOptions {
        count: 4,
        init_period: 4,
    };
    let run = || -> abuckets_core::Result<String> {
        let data = training_set(512, 2, 10, &vocab, shape, total)?;
        let opts = TrainOptions {
            steps: 400,
            batch_size: 16,
            seed: 10,
            ignore_token: Some(vocab.pad),
            ..TrainOptions::default()
        };
        let trained = train::<f64>(&cfg, &data, &opts)?;
        let rotary = RotaryConfig::new(10_000.0, cfg.head_dim, cfg.max_context, 10_000.0)?;
        let mut tasks = Vec::new();
        for i in 0..100 {
            let t = generate_task(2, 1_000 + i, &vocab, shape, total)?;
            let (p, q) = placement_rounds(&t, &rotary, finder)?;
            tasks.push(p);
            tasks.push(q);
        }
        let space = build_space(10_000.0, 30_000.0, 2_500.0)?;
        let bases = search_bases(
            &space,
            &rotary,
            &SearchOptions {
                n_bases: 4,
                n_extrema: finder.count,
                init_period: finder.init_period,
                pairing: Pairing::Nearest,
            },
        )?
        .set
        .bases;
        let single = evaluate(&trained.params, &tasks, &Decoder::Single(10_000.0), &vocab)?.summary();
        let ens = evaluate(&trained.params, &tasks, &Decoder::Buckets(bases.clone()), &vocab)?.summary();
        let last = trained.losses.last().copied().unwrap_or(f64::NAN);
        Ok(format!(
            "final loss {last:.3}; base 10000: peak {:.2} trough {:.2}; bases {bases:?}: peak {:.2} trough {:.2} (n={})",
            single.peak_acc.unwrap_or(f64::NAN),
            single.trough_acc.unwrap_or(f64::NAN),
            ens.peak_acc.unwrap_or(f64::NAN),
            ens.trough_acc.unwrap_or(f64::NAN),
            single.n
        ))
    };
    let detail = match run() {
        Ok(s) => s,
        Err(e) => format!("report unavailable: {e}"),
    };
    Outcome {
        id: 10,
        name: "exploratory peak/trough report (desk-scale substitute)",
        pass: true,
        gating: false,
        detail: format!("{detail}; {:.2?}", start.elapsed()),
    }
}

fn main() -> ExitCode {
    let criteria: [fn() -> Outcome; 10] = [
        criterion_1,
        criterion_2,
        criterion_3,
        criterion_4,
        criterion_5,
        criterion_6,
        criterion_7,
        criterion_8,
        criterion_9,
        criterion_10,
    ];
    let mut failed = 0;
    for c in criteria {
        let o = c();
        let tag = match (o.gating, o.pass) {
            (false, _) => "INFO",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        if o.gating && !o.pass {
            failed += 1;
        }
        println!("[{tag}] criterion {:>2}: {} - {}", o.id, o.name, o.detail);
    }
    println!("acceptance: {} of 9 gating criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
