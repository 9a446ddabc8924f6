//! Subcommand bodies. Each returns its artifacts in memory; the binary
//! decides where they go.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use abuckets_core::ensemble::decode_sequence_with;
use abuckets_core::ensemble::greedy_decode;
use abuckets_core::kv::{
    evaluate_with, generate_task, placement_rounds, training_set, Decoder, KvShape, KvTask, KvVocab, RetrievalReport,
};
use abuckets_core::model::{train as train_model, ModelParams, TrainOptions};
use abuckets_core::search::{build_space, search_bases, SearchOptions};
use abuckets_core::waveform::{curve, find_extrema, ExtremaOptions, ExtremaSet, RotaryConfig};
use abuckets_core::Token;

use crate::checkpoint::{AnyModel, Precision};
use crate::config::{DecodeConfig, EvalKvConfig, ExtremaConfig, SearchConfig, TrainConfig, WaveformConfig};
use crate::executor::Threaded;
use crate::format;

pub fn waveform(cfg: &WaveformConfig) -> Result<String> {
    let rc = RotaryConfig::new(cfg.base, cfg.dim, cfg.max_context, cfg.base)?;
    Ok(format::curve_csv(&curve(&rc)?))
}

pub fn extrema(cfg: &ExtremaConfig) -> Result<ExtremaSet> {
    let rc = RotaryConfig::new(cfg.base, cfg.dim, cfg.max_context, cfg.base)?;
    Ok(find_extrema(&rc, cfg.n_extrema, cfg.init_period)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub admitted: f64,
    /// Distance of every candidate still available in this round, keyed
    /// by base.
    pub distances: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub bases: Vec<f64>,
    pub rounds: Vec<RoundLog>,
}

fn base_key(b: f64) -> String {
    format::real(b)
}

pub fn search(cfg: &SearchConfig) -> Result<SearchReport> {
    let train_base = cfg.train_base.unwrap_or(cfg.b_min);
    let rc = RotaryConfig::new(train_base, cfg.head_dim, cfg.max_context, train_base)?;
    let space = build_space(cfg.b_min, cfg.b_max, cfg.stride)?;
    let opts = SearchOptions {
        n_bases: cfg.n_bases,
        n_extrema: cfg.n_extrema,
        init_period: cfg.init_period,
        pairing: cfg.pairing,
    };
    let out = search_bases(&space, &rc, &opts)?;
    let rounds = out
        .rounds
        .into_iter()
        .map(|r| RoundLog {
            admitted: r.admitted,
            distances: r.distances.into_iter().map(|(b, d)| (base_key(b), Value::from(d))).collect(),
        })
        .collect();
    Ok(SearchReport {
        bases: out.set.bases,
        rounds,
    })
}

pub struct Trained {
    pub model: AnyModel,
    pub losses: Vec<f64>,
}

pub fn train(cfg: &TrainConfig, precision: Precision) -> Result<Trained> {
    let Some(seed) = cfg.seed else {
        bail!("train needs an explicit --seed");
    };
    let model_cfg = cfg.model.build();
    model_cfg.validate()?;
    let vocab = KvVocab::new(u32::try_from(model_cfg.vocab_size).context("vocab_size too large")?)?;
    let shape = KvShape {
        key_len: cfg.key_len,
        value_len: cfg.value_len,
    };
    ensure!(
        cfg.total_length + cfg.value_len < model_cfg.max_context,
        "prompt of {} plus answer of {} exceeds max_context {}",
        cfg.total_length,
        cfg.value_len + 1,
        model_cfg.max_context
    );
    // Task generation and parameter init draw from separate streams of the one seed.
    let data = training_set(cfg.tasks, cfg.pairs, seed.wrapping_add(1), &vocab, shape, cfg.total_length)?;
    let opts = TrainOptions {
        steps: cfg.steps,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        seed,
        ignore_token: Some(vocab.pad),
        clip_norm: (cfg.clip_norm > 0.0).then_some(cfg.clip_norm),
    };
    Ok(match precision {
        Precision::F64 => {
            let out = train_model::<f64>(&model_cfg, &data, &opts)?;
            Trained {
                model: AnyModel::F64(out.params),
                losses: out.losses,
            }
        }
        Precision::F32 => {
            let out = train_model::<f32>(&model_cfg, &data, &opts)?;
            Trained {
                model: AnyModel::F32(out.params),
                losses: out.losses,
            }
        }
    })
}

/// Random initialization only, for tests and smoke runs.
pub fn untrained(cfg: &abuckets_core::model::ModelConfig, seed: u64) -> Result<AnyModel> {
    Ok(AnyModel::F64(ModelParams::init(cfg, seed)?))
}

/// Reads a JSON array of bases or an object with a `bases` field.
pub fn read_bases(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading bases {}", path.display()))?;
    let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing bases {}", path.display()))?;
    let list = match &v {
        Value::Array(_) => &v,
        Value::Object(m) => m
            .get("bases")
            .with_context(|| format!("{} has no \"bases\" field", path.display()))?,
        _ => bail!("{} must hold an array or an object with \"bases\"", path.display()),
    };
    let bases: Vec<f64> = serde_json::from_value(list.clone()).context("bases must be numbers")?;
    ensure!(!bases.is_empty(), "{} lists no bases", path.display());
    Ok(bases)
}

fn read_tokens(path: &Path) -> Result<Vec<Token>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading context {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("{} must hold a JSON array of token ids", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub alpha: Vec<f64>,
    pub per_run_top1: Vec<Token>,
    pub chosen: Token,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub bases: Vec<f64>,
    pub steps: Vec<TraceStep>,
    pub tokens: Vec<Token>,
    pub truncated: bool,
}

enum BaseChoice {
    One(f64),
    Many(Vec<f64>),
}

fn choose_bases(file: Option<&Path>, single: Option<f64>) -> Result<BaseChoice> {
    match (file, single) {
        (Some(_), Some(_)) => bail!("give either --bases or --base, not both"),
        (None, None) => bail!("one of --bases or --base is required"),
        (Some(p), None) => Ok(BaseChoice::Many(read_bases(p)?)),
        (None, Some(b)) => Ok(BaseChoice::One(b)),
    }
}

pub fn decode_with_model(model: &AnyModel, context: &[Token], cfg: &DecodeConfig) -> Result<DecodeTrace> {
    match choose_bases(cfg.bases.as_deref(), cfg.base)? {
        BaseChoice::One(base) => {
            let g = greedy_decode(model, context, base, cfg.max_new_tokens, cfg.stop_token)?;
            Ok(DecodeTrace {
                bases: vec![base],
                steps: g
                    .tokens
                    .iter()
                    .map(|&t| TraceStep {
                        alpha: vec![1.0],
                        per_run_top1: vec![t],
                        chosen: t,
                    })
                    .collect(),
                tokens: g.tokens,
                truncated: g.truncated,
            })
        }
        BaseChoice::Many(bases) => {
            let exec = Threaded::new(cfg.threads);
            let d = decode_sequence_with(model, context, &bases, cfg.max_new_tokens, cfg.stop_token, &exec)?;
            Ok(DecodeTrace {
                bases,
                steps: d
                    .steps
                    .iter()
                    .map(|s| TraceStep {
                        alpha: s.confidences.clone(),
                        per_run_top1: s.per_run_top1(),
                        chosen: s.chosen,
                    })
                    .collect(),
                tokens: d.tokens,
                truncated: d.truncated,
            })
        }
    }
}

pub fn decode(cfg: &DecodeConfig) -> Result<DecodeTrace> {
    let ckpt = cfg.checkpoint.as_deref().context("--checkpoint is required")?;
    let ctx = cfg.context.as_deref().context("--context is required")?;
    let model = AnyModel::load(ckpt)?;
    decode_with_model(&model, &read_tokens(ctx)?, cfg)
}

pub struct Evaluation {
    pub report: RetrievalReport,
    pub tasks: Vec<KvTask>,
}

/// Generates `cfg.tasks` tasks, places each on a mid-context peak and its
/// nearest trough of the waveform, and scores both rounds.
pub fn eval_kv_with_model(model: &AnyModel, cfg: &EvalKvConfig) -> Result<Evaluation> {
    let Some(seed) = cfg.seed else {
        bail!("eval-kv needs an explicit --seed");
    };
    let mc = model.config();
    let decoder = match choose_bases(cfg.bases.as_deref(), cfg.base)? {
        BaseChoice::One(b) => Decoder::Single(b),
        BaseChoice::Many(bs) => Decoder::Buckets(bs),
    };
    let vocab = KvVocab::new(u32::try_from(mc.vocab_size).context("vocab_size too large")?)?;
    let shape = KvShape {
        key_len: cfg.key_len,
        value_len: cfg.value_len,
    };
    let wave_base = cfg.waveform_base.unwrap_or(mc.train_base);
    let rc = RotaryConfig::new(wave_base, mc.head_dim, mc.max_context, mc.train_base.min(wave_base))?;
    let finder = ExtremaOptions {
        count: cfg.n_extrema,
        init_period: cfg.init_period,
    };
    let mut tasks = Vec::with_capacity(2 * cfg.tasks);
    for i in 0..cfg.tasks {
        let task = generate_task(cfg.pairs, seed.wrapping_add(i as u64), &vocab, shape, cfg.total_length)?;
        let (peak, trough) = placement_rounds(&task, &rc, finder)?;
        tasks.push(peak);
        tasks.push(trough);
    }
    let report = evaluate_with(model, &tasks, &decoder, &vocab, &Threaded::new(cfg.threads))?;
    Ok(Evaluation { report, tasks })
}

pub fn eval_kv(cfg: &EvalKvConfig) -> Result<Evaluation> {
    let ckpt = cfg.checkpoint.as_deref().context("--checkpoint is required")?;
    eval_kv_with_model(&AnyModel::load(ckpt)?, cfg)
}

pub fn tasks_jsonl(tasks: &[KvTask]) -> Result<String> {
    let mut out = String::new();
    for t in tasks {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn parse_tasks_jsonl(text: &str) -> Result<Vec<KvTask>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("task line {}", i + 1)))
        .collect()
}
