//! Synthetic in-context key/value retrieval.
//!
//! A prompt renders as
//!
//! ```text
//! [pad * lead] { k0 : v0 , k1 : v1 , ... } [pad * mid] QUERY k_target ANSWER
//! ```
//!
//! and the model is expected to continue with the target value. A task's
//! `target_position` is the absolute index of the target pair's last token
//! (its final value token). `lead + mid` is fixed by the task's
//! `total_length`, so moving the target only trades lead padding against
//! mid padding.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{decode_sequence_with, greedy_decode, LanguageModel, RunExecutor, Sequential};
use crate::model::Sequence;
use crate::waveform::{find_peaks, find_troughs, ExtremaOptions, RotaryConfig};
use crate::{Error, Result, Token};

/// Reserved token ids of the task template. Content tokens are
/// `first_content..vocab_size`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvVocab {
    pub vocab_size: u32,
    pub pad: Token,
    pub open: Token,
    pub close: Token,
    pub colon: Token,
    pub comma: Token,
    pub query: Token,
    pub answer: Token,
    pub stop: Token,
    pub first_content: Token,
}

impl KvVocab {
    pub const RESERVED: u32 = 8;

    pub fn new(vocab_size: u32) -> Result<Self> {
        if vocab_size < Self::RESERVED + 2 {
            return Err(Error::InvalidConfig(format!(
                "vocabulary of {vocab_size} leaves fewer than 2 content tokens"
            )));
        }
        Ok(Self {
            vocab_size,
            pad: 0,
            open: 1,
            close: 2,
            colon: 3,
            comma: 4,
            query: 5,
            answer: 6,
            stop: 7,
            first_content: Self::RESERVED,
        })
    }

    pub fn content_size(&self) -> u32 {
        self.vocab_size - self.first_content
    }
}

/// Fixed key and value lengths, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvShape {
    pub key_len: usize,
    pub value_len: usize,
}

impl Default for KvShape {
    fn default() -> Self {
        Self {
            key_len: 8,
            value_len: 8,
        }
    }
}

impl KvShape {
    /// `key : value`
    pub fn pair_len(&self) -> usize {
        self.key_len + 1 + self.value_len
    }

    /// `{ pair , pair , ... }`
    pub fn json_len(&self, pairs: usize) -> usize {
        2 + pairs * self.pair_len() + pairs.saturating_sub(1)
    }

    /// `QUERY key ANSWER`
    pub fn query_len(&self) -> usize {
        self.key_len + 2
    }

    /// Offset of pair `slot`'s last token from the start of the JSON block.
    pub fn last_token_offset(&self, slot: usize) -> usize {
        1 + slot * (self.pair_len() + 1) + self.pair_len() - 1
    }

    /// Largest number of pairs that fits in `total_length` tokens.
    pub fn capacity(&self, total_length: usize) -> usize {
        let avail = match total_length.checked_sub(self.query_len() + 2) {
            Some(a) => a,
            None => return 0,
        };
        // K pairs need K * pair_len + (K - 1) tokens.
        (avail + 1) / (self.pair_len() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    Peak,
    Trough,
    Unconstrained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvPair {
    pub key: Vec<Token>,
    pub value: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvTask {
    pub pairs: Vec<KvPair>,
    pub target_index: usize,
    pub target_position: usize,
    pub placement: Placement,
    pub total_length: usize,
    pub lead_padding: usize,
}

impl KvTask {
    pub fn shape(&self) -> KvShape {
        KvShape {
            key_len: self.pairs[0].key.len(),
            value_len: self.pairs[0].value.len(),
        }
    }

    pub fn target(&self) -> &KvPair {
        &self.pairs[self.target_index]
    }

    /// Padding between the JSON block and the query.
    pub fn mid_padding(&self) -> usize {
        let s = self.shape();
        self.total_length - self.lead_padding - s.json_len(self.pairs.len()) - s.query_len()
    }

    pub fn render(&self, vocab: &KvVocab) -> Vec<Token> {
        let mut out = Vec::with_capacity(self.total_length);
        out.extend(core::iter::repeat_n(vocab.pad, self.lead_padding));
        out.push(vocab.open);
        for (i, pair) in self.pairs.iter().enumerate() {
            if i > 0 {
                out.push(vocab.comma);
            }
            out.extend_from_slice(&pair.key);
            out.push(vocab.colon);
            out.extend_from_slice(&pair.value);
        }
        out.push(vocab.close);
        out.extend(core::iter::repeat_n(vocab.pad, self.mid_padding()));
        out.push(vocab.query);
        out.extend_from_slice(&self.target().key);
        out.push(vocab.answer);
        out
    }

    /// Prompt followed by the expected value and the stop token.
    pub fn render_with_answer(&self, vocab: &KvVocab) -> Vec<Token> {
        let mut out = self.render(vocab);
        out.extend_from_slice(&self.target().value);
        out.push(vocab.stop);
        out
    }

    /// Structural invariants: distinct keys and values, uniform lengths,
    /// content-only tokens, consistent padding and anchoring.
    pub fn validate(&self, vocab: &KvVocab) -> Result<()> {
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.pairs.is_empty() || self.target_index >= self.pairs.len() {
            return bad(format!(
                "target index {} outside {} pairs",
                self.target_index,
                self.pairs.len()
            ));
        }
        let s = self.shape();
        if s.key_len == 0 || s.value_len == 0 {
            return bad("keys and values must be non-empty".into());
        }
        let mut keys = BTreeSet::new();
        let mut values = BTreeSet::new();
        for p in &self.pairs {
            if p.key.len() != s.key_len || p.value.len() != s.value_len {
                return bad("all keys and values must share one length".into());
            }
            if p.key.iter().chain(&p.value).any(|&t| t < vocab.first_content || t >= vocab.vocab_size) {
                return bad("key/value tokens must be content tokens".into());
            }
            if !keys.insert(&p.key) || !values.insert(&p.value) {
                return bad("keys and values must be pairwise distinct".into());
            }
        }
        let fixed = s.json_len(self.pairs.len()) + s.query_len();
        if self.lead_padding + fixed > self.total_length {
            return bad(format!(
                "lead padding {} + {fixed} exceeds total length {}",
                self.lead_padding, self.total_length
            ));
        }
        if self.target_position != self.lead_padding + s.last_token_offset(self.target_index) {
            return bad("target_position does not match the rendered layout".into());
        }
        Ok(())
    }
}

fn random_string(rng: &mut ChaCha8Rng, len: usize, vocab: &KvVocab) -> Vec<Token> {
    (0..len)
        .map(|_| rng.random_range(vocab.first_content..vocab.vocab_size))
        .collect()
}

/// Draws `pairs` distinct random keys and values and a uniformly chosen
/// target. The target starts unplaced: no lead padding, everything else
/// between the JSON block and the query.
pub fn generate_task(pairs: usize, seed: u64, vocab: &KvVocab, shape: KvShape, total_length: usize) -> Result<KvTask> {
    if pairs == 0 || shape.key_len == 0 || shape.value_len == 0 {
        return Err(Error::InvalidConfig("need at least one pair of non-empty strings".into()));
    }
    let required = shape.json_len(pairs) + shape.query_len();
    if required > total_length {
        return Err(Error::TaskTooLarge {
            required,
            available: total_length,
        });
    }
    let shortest = shape.key_len.min(shape.value_len) as u32;
    let distinct = num_traits::Float::powi(vocab.content_size() as f64, shortest as i32);
    if distinct < pairs as f64 {
        return Err(Error::InvalidConfig(format!(
            "only {distinct} distinct strings of length {shortest} for {pairs} pairs"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keys = BTreeSet::new();
    let mut values = BTreeSet::new();
    let mut out = Vec::with_capacity(pairs);
    while out.len() < pairs {
        let key = random_string(&mut rng, shape.key_len, vocab);
        if keys.contains(&key) {
            continue;
        }
        let value = loop {
            let v = random_string(&mut rng, shape.value_len, vocab);
            if !values.contains(&v) {
                break v;
            }
        };
        keys.insert(key.clone());
        values.insert(value.clone());
        out.push(KvPair { key, value });
    }
    let target_index = rng.random_range(0..pairs);
    Ok(KvTask {
        target_position: shape.last_token_offset(target_index),
        pairs: out,
        target_index,
        placement: Placement::Unconstrained,
        total_length,
        lead_padding: 0,
    })
}

/// Moves the target so its last token lands exactly on `position`.
///
/// The target keeps its slot when lead padding alone can reach `position`;
/// otherwise it moves to the admissible slot nearest its current one (lower
/// slot on ties), with the other pairs keeping their relative order.
pub fn place_target(task: &KvTask, position: usize, placement: Placement) -> Result<KvTask> {
    let s = task.shape();
    let k = task.pairs.len();
    let slack = task.total_length - s.json_len(k) - s.query_len();
    let lead_for = |slot: usize| {
        position
            .checked_sub(s.last_token_offset(slot))
            .filter(|&lead| lead <= slack)
    };
    let slot = if lead_for(task.target_index).is_some() {
        task.target_index
    } else {
        (0..k)
            .filter(|&i| lead_for(i).is_some())
            .min_by_key(|&i| (i.abs_diff(task.target_index), i))
            .ok_or_else(|| {
                Error::InvalidPlacement(format!(
                    "position {position} unreachable with {k} pairs and {slack} padding tokens"
                ))
            })?
    };
    let mut pairs = task.pairs.clone();
    let target = pairs.remove(task.target_index);
    pairs.insert(slot, target);
    Ok(KvTask {
        pairs,
        target_index: slot,
        target_position: position,
        placement,
        total_length: task.total_length,
        lead_padding: lead_for(slot).expect("slot admissible"),
    })
}

/// Picks the peak closest to the middle of `window` (relative distances,
/// inclusive) and the trough nearest to that peak. Ties go to the smaller
/// distance.
pub fn peak_trough_positions_for(
    config: &RotaryConfig,
    window: (usize, usize),
    finder: ExtremaOptions,
) -> Result<(usize, usize)> {
    let (lo, hi) = window;
    if lo > hi || hi >= config.max_context {
        return Err(Error::InvalidConfig(format!(
            "window [{lo}, {hi}] outside max context {}",
            config.max_context
        )));
    }
    let peaks = find_peaks(config, finder.count, finder.init_period)?;
    let troughs = find_troughs(config, finder.count, finder.init_period)?;
    let mid2 = lo + hi;
    let peak = peaks
        .iter()
        .copied()
        .filter(|p| (lo..=hi).contains(p))
        .min_by_key(|&p| ((2 * p).abs_diff(mid2), p))
        .ok_or(Error::NoExtrema)?;
    let trough = troughs
        .iter()
        .copied()
        .min_by_key(|&t| (t.abs_diff(peak), t))
        .ok_or(Error::NoExtrema)?;
    Ok((peak, trough))
}

/// Distance window covering the middle 40%..60% of a prompt of
/// `total_length` tokens, measured back from the last prompt token.
pub fn middle_window(total_length: usize) -> (usize, usize) {
    let last = total_length - 1;
    let lo_pos = (2 * total_length).div_ceil(5);
    let hi_pos = (3 * total_length) / 5;
    (last - hi_pos.min(last), last - lo_pos.min(last))
}

/// The two evaluation rounds of one task: the target on a mid-context peak
/// of `config`'s waveform, then on the trough nearest to it. Positions are
/// converted from relative distance to absolute index against the last
/// prompt token.
pub fn placement_rounds(task: &KvTask, config: &RotaryConfig, finder: ExtremaOptions) -> Result<(KvTask, KvTask)> {
    let last = task.total_length - 1;
    let (peak, trough) = peak_trough_positions_for(config, middle_window(task.total_length), finder)?;
    let at = |dist: usize, p: Placement| {
        let pos = last
            .checked_sub(dist)
            .ok_or_else(|| Error::InvalidPlacement(format!("distance {dist} precedes the prompt")))?;
        place_target(task, pos, p)
    };
    Ok((at(peak, Placement::Peak)?, at(trough, Placement::Trough)?))
}

/// Prompt plus answer, scored only on the value tokens and the stop token.
pub fn training_sequence(task: &KvTask, vocab: &KvVocab) -> Sequence {
    Sequence {
        tokens: task.render_with_answer(vocab),
        loss_start: task.total_length - 1,
    }
}

/// `count` tasks with `pairs` pairs each, the target's lead padding drawn
/// uniformly so that every admissible offset of its slot is seen.
pub fn training_set(
    count: usize,
    pairs: usize,
    seed: u64,
    vocab: &KvVocab,
    shape: KvShape,
    total_length: usize,
) -> Result<Vec<Sequence>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let task = generate_task(pairs, rng.random(), vocab, shape, total_length)?;
            let slack = task.mid_padding();
            let lead = rng.random_range(0..=slack);
            let placed = place_target(&task, task.target_position + lead, Placement::Unconstrained)?;
            Ok(training_sequence(&placed, vocab))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Decoder {
    /// Plain greedy decoding under one base.
    Single(f64),
    /// Confidence-weighted ensemble over several bases.
    Buckets(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub placement: Placement,
    pub position: usize,
    pub correct: bool,
    pub generated: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub n_samples: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub records: Vec<SampleRecord>,
}

/// Per-placement summary with the peak/trough column layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub peak_acc: Option<f64>,
    pub trough_acc: Option<f64>,
    pub n: usize,
}

impl RetrievalReport {
    pub fn from_records(records: Vec<SampleRecord>) -> Self {
        let n_samples = records.len();
        let n_correct = records.iter().filter(|r| r.correct).count();
        let accuracy = if n_samples == 0 {
            0.0
        } else {
            n_correct as f64 / n_samples as f64
        };
        Self {
            n_samples,
            n_correct,
            accuracy,
            records,
        }
    }

    pub fn accuracy_for(&self, placement: Placement) -> Option<f64> {
        let (n, ok) = self
            .records
            .iter()
            .filter(|r| r.placement == placement)
            .fold((0usize, 0usize), |(n, ok), r| (n + 1, ok + r.correct as usize));
        (n > 0).then(|| ok as f64 / n as f64)
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            peak_acc: self.accuracy_for(Placement::Peak),
            trough_acc: self.accuracy_for(Placement::Trough),
            n: self.n_samples,
        }
    }
}

pub fn evaluate<M: LanguageModel + ?Sized>(
    model: &M,
    tasks: &[KvTask],
    decoder: &Decoder,
    vocab: &KvVocab,
) -> Result<RetrievalReport> {
    evaluate_with(model, tasks, decoder, vocab, &Sequential)
}

/// Decodes the value of every task and scores exact matches of the value
/// tokens (no partial credit).
pub fn evaluate_with<M: LanguageModel + ?Sized, E: RunExecutor>(
    model: &M,
    tasks: &[KvTask],
    decoder: &Decoder,
    vocab: &KvVocab,
    executor: &E,
) -> Result<RetrievalReport> {
    if tasks.is_empty() {
        return Err(Error::InvalidConfig("no tasks to evaluate".into()));
    }
    let mut records = Vec::with_capacity(tasks.len());
    for task in tasks {
        let prompt = task.render(vocab);
        let want = &task.target().value;
        let generated = match decoder {
            Decoder::Single(base) => greedy_decode(model, &prompt, *base, want.len(), Some(vocab.stop))?.tokens,
            Decoder::Buckets(bases) => {
                decode_sequence_with(model, &prompt, bases, want.len(), Some(vocab.stop), executor)?.tokens
            }
        };
        records.push(SampleRecord {
            placement: task.placement,
            position: task.target_position,
            correct: &generated == want,
            generated,
        });
    }
    Ok(RetrievalReport::from_records(records))
}
