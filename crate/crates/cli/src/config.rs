//! Subcommand parameters. Each subcommand has a flag struct (every field
//! optional) and a resolved config with defaults. A JSON config file with
//! the same field names may supply any subset; flags given on the command
//! line win over the file.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use abuckets_core::model::ModelConfig;
use abuckets_core::search::{Pairing, DEFAULT_INIT_PERIOD, DEFAULT_N_EXTREMA};

/// Merges `flags` over the optional JSON file and deserializes the result.
pub fn resolve<T: DeserializeOwned>(file: Option<&Path>, flags: &impl Serialize) -> Result<T> {
    let mut merged = match file {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let v: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            if !v.is_object() {
                bail!("config {} must hold a JSON object", path.display());
            }
            v
        }
        None => Value::Object(Default::default()),
    };
    let Value::Object(flags) = serde_json::to_value(flags)? else {
        bail!("flags did not serialize to an object");
    };
    let target = merged.as_object_mut().expect("checked above");
    for (k, v) in flags {
        if !v.is_null() {
            target.insert(k, v);
        }
    }
    serde_json::from_value(merged).context("invalid configuration")
}

#[derive(Debug, Clone, Default, Args)]
pub struct Io {
    /// JSON file with the subcommand's fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn d_base() -> f64 {
    10_000.0
}
fn d_dim() -> usize {
    128
}
fn d_ctx() -> usize {
    4096
}
fn d_n_extrema() -> usize {
    DEFAULT_N_EXTREMA
}
fn d_init_period() -> usize {
    DEFAULT_INIT_PERIOD
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct WaveformFlags {
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub max_context: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformConfig {
    #[serde(default = "d_base")]
    pub base: f64,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_ctx")]
    pub max_context: usize,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ExtremaFlags {
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub max_context: Option<usize>,
    #[arg(long)]
    pub n_extrema: Option<usize>,
    #[arg(long)]
    pub init_period: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtremaConfig {
    #[serde(default = "d_base")]
    pub base: f64,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_ctx")]
    pub max_context: usize,
    #[serde(default = "d_n_extrema")]
    pub n_extrema: usize,
    #[serde(default = "d_init_period")]
    pub init_period: usize,
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct SearchFlags {
    #[arg(long)]
    pub b_min: Option<f64>,
    #[arg(long)]
    pub b_max: Option<f64>,
    #[arg(long)]
    pub stride: Option<f64>,
    #[arg(long)]
    pub n_bases: Option<usize>,
    #[arg(long)]
    pub n_extrema: Option<usize>,
    #[arg(long)]
    pub init_period: Option<usize>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long)]
    pub max_context: Option<usize>,
    /// Training base; defaults to b_min, which it must equal.
    #[arg(long)]
    pub train_base: Option<f64>,
    #[arg(long, value_parser = parse_pairing)]
    pub pairing: Option<Pairing>,
}

fn parse_pairing(s: &str) -> Result<Pairing, String> {
    serde_json::from_value(Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown pairing {s:?} (expected nearest or index-wise)"))
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "d_base")]
    pub b_min: f64,
    #[serde(default = "d_b_max")]
    pub b_max: f64,
    #[serde(default = "d_stride")]
    pub stride: f64,
    #[serde(default = "d_n_bases")]
    pub n_bases: usize,
    #[serde(default = "d_n_extrema")]
    pub n_extrema: usize,
    #[serde(default = "d_init_period")]
    pub init_period: usize,
    #[serde(default = "d_dim")]
    pub head_dim: usize,
    #[serde(default = "d_ctx")]
    pub max_context: usize,
    #[serde(default)]
    pub train_base: Option<f64>,
    #[serde(default)]
    pub pairing: Pairing,
}

fn d_b_max() -> f64 {
    30_000.0
}
fn d_stride() -> f64 {
    500.0
}
fn d_n_bases() -> usize {
    6
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ModelFlags {
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub model_dim: Option<usize>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long)]
    pub n_heads: Option<usize>,
    #[arg(long)]
    pub n_layers: Option<usize>,
    #[arg(long)]
    pub max_context: Option<usize>,
    #[arg(long)]
    pub train_base: Option<f64>,
}

/// Task shape shared by training and evaluation.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct TaskFlags {
    /// Number of tasks (training sequences or evaluation samples).
    #[arg(long)]
    pub tasks: Option<usize>,
    /// Key/value pairs per task.
    #[arg(long)]
    pub pairs: Option<usize>,
    /// Prompt length in tokens.
    #[arg(long)]
    pub total_length: Option<usize>,
    #[arg(long)]
    pub key_len: Option<usize>,
    #[arg(long)]
    pub value_len: Option<usize>,
}

fn d_pairs() -> usize {
    4
}
fn d_total_length() -> usize {
    96
}
fn d_kv_len() -> usize {
    8
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct TrainFlags {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub task: TaskFlags,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelFlags,
    /// Loss trace CSV; `<out>.loss.csv` when absent.
    #[arg(long)]
    pub loss: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TrainConfig {
    pub seed: Option<u64>,
    #[serde(default = "d_steps")]
    pub steps: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_clip")]
    pub clip_norm: f64,
    #[serde(default = "d_train_tasks")]
    pub tasks: usize,
    #[serde(default = "d_pairs")]
    pub pairs: usize,
    #[serde(default = "d_total_length")]
    pub total_length: usize,
    #[serde(default = "d_kv_len")]
    pub key_len: usize,
    #[serde(default = "d_kv_len")]
    pub value_len: usize,
    #[serde(default)]
    pub loss: Option<PathBuf>,
    #[serde(flatten)]
    pub model: ModelOverrides,
}

fn d_steps() -> usize {
    200
}
fn d_lr() -> f64 {
    3e-3
}
fn d_batch() -> usize {
    8
}
fn d_clip() -> f64 {
    1.0
}
fn d_train_tasks() -> usize {
    512
}

/// Model fields with the toy defaults filled in.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
pub struct ModelOverrides {
    pub vocab_size: Option<usize>,
    pub model_dim: Option<usize>,
    pub head_dim: Option<usize>,
    pub n_heads: Option<usize>,
    pub n_layers: Option<usize>,
    pub max_context: Option<usize>,
    pub train_base: Option<f64>,
}

impl ModelOverrides {
    pub fn build(&self) -> ModelConfig {
        let d = ModelConfig::default();
        ModelConfig {
            vocab_size: self.vocab_size.unwrap_or(d.vocab_size),
            model_dim: self.model_dim.unwrap_or(d.model_dim),
            head_dim: self.head_dim.unwrap_or(d.head_dim),
            n_heads: self.n_heads.unwrap_or(d.n_heads),
            n_layers: self.n_layers.unwrap_or(d.n_layers),
            max_context: self.max_context.unwrap_or(d.max_context),
            train_base: self.train_base.unwrap_or(d.train_base),
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct DecodeFlags {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// JSON array of context token ids.
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// JSON array of bases, or the output of `search`.
    #[arg(long)]
    pub bases: Option<PathBuf>,
    /// Single base for plain greedy decoding.
    #[arg(long)]
    pub base: Option<f64>,
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    #[arg(long)]
    pub stop_token: Option<u32>,
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeConfig {
    pub checkpoint: Option<PathBuf>,
    pub context: Option<PathBuf>,
    #[serde(default)]
    pub bases: Option<PathBuf>,
    #[serde(default)]
    pub base: Option<f64>,
    #[serde(default = "d_max_new")]
    pub max_new_tokens: usize,
    #[serde(default)]
    pub stop_token: Option<u32>,
    #[serde(default = "d_threads")]
    pub threads: usize,
}

fn d_max_new() -> usize {
    16
}
fn d_threads() -> usize {
    1
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct EvalKvFlags {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    #[serde(flatten)]
    pub task: TaskFlags,
    #[arg(long)]
    pub bases: Option<PathBuf>,
    #[arg(long)]
    pub base: Option<f64>,
    /// Base whose waveform places the target; the model's training base
    /// when absent.
    #[arg(long)]
    pub waveform_base: Option<f64>,
    #[arg(long)]
    pub n_extrema: Option<usize>,
    #[arg(long)]
    pub init_period: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Writes the evaluated tasks as JSON lines.
    #[arg(long)]
    pub tasks_out: Option<PathBuf>,
    /// Writes the full per-sample report.
    #[arg(long)]
    pub records: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalKvConfig {
    pub checkpoint: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default = "d_eval_tasks")]
    pub tasks: usize,
    #[serde(default = "d_pairs")]
    pub pairs: usize,
    #[serde(default = "d_total_length")]
    pub total_length: usize,
    #[serde(default = "d_kv_len")]
    pub key_len: usize,
    #[serde(default = "d_kv_len")]
    pub value_len: usize,
    #[serde(default)]
    pub bases: Option<PathBuf>,
    #[serde(default)]
    pub base: Option<f64>,
    #[serde(default)]
    pub waveform_base: Option<f64>,
    #[serde(default = "d_toy_n_extrema")]
    pub n_extrema: usize,
    #[serde(default = "d_toy_init_period")]
    pub init_period: usize,
    #[serde(default = "d_threads")]
    pub threads: usize,
    #[serde(default)]
    pub tasks_out: Option<PathBuf>,
    #[serde(default)]
    pub records: Option<PathBuf>,
}

fn d_eval_tasks() -> usize {
    32
}
pub const TOY_N_EXTREMA: usize = 4;
pub const TOY_INIT_PERIOD: usize = 8;
fn d_toy_n_extrema() -> usize {
    TOY_N_EXTREMA
}
fn d_toy_init_period() -> usize {
    TOY_INIT_PERIOD
}

#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct CalibrateFlags {
    /// JSON list of `{"stride":…, "n_bases":…, "bases":[…]}` targets.
    #[arg(long)]
    pub targets: Option<PathBuf>,
    #[arg(long)]
    pub b_min: Option<f64>,
    #[arg(long)]
    pub b_max: Option<f64>,
    #[arg(long)]
    pub head_dim: Option<usize>,
    #[arg(long)]
    pub max_context: Option<usize>,
    #[arg(long)]
    pub max_extrema: Option<usize>,
    #[arg(long)]
    pub max_period: Option<usize>,
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateConfig {
    pub targets: Option<PathBuf>,
    #[serde(default = "d_base")]
    pub b_min: f64,
    #[serde(default = "d_b_max")]
    pub b_max: f64,
    #[serde(default = "d_dim")]
    pub head_dim: usize,
    #[serde(default = "d_ctx")]
    pub max_context: usize,
    #[serde(default = "d_max_extrema")]
    pub max_extrema: usize,
    #[serde(default = "d_max_period")]
    pub max_period: usize,
    #[serde(default = "d_top")]
    pub top: usize,
}

fn d_max_extrema() -> usize {
    12
}
fn d_max_period() -> usize {
    1500
}
fn d_top() -> usize {
    10
}
