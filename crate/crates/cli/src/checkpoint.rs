//! Flat little-endian parameter file plus a JSON sidecar (`<file>.json`)
//! holding the model configuration, element precision and tensor table.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use abuckets_core::ensemble::LanguageModel;
use abuckets_core::model::{ModelConfig, ModelParams, Real};
use abuckets_core::{Token, TokenDistribution};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub offset: usize,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ModelConfig,
    pub precision: Precision,
    pub len: usize,
    pub tensors: Vec<TensorEntry>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

trait Stored: Real {
    const PRECISION: Precision;
    const WIDTH: usize;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl Stored for f32 {
    const PRECISION: Precision = Precision::F32;
    const WIDTH: usize = 4;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Stored for f64 {
    const PRECISION: Precision = Precision::F64;
    const WIDTH: usize = 8;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

fn write<F: Stored>(params: &ModelParams<F>, path: &Path) -> Result<()> {
    let cfg = params.config().clone();
    let tensors = params
        .layout()
        .tensors(&cfg)
        .into_iter()
        .map(|(name, range, shape)| TensorEntry {
            name,
            offset: range.start,
            shape,
        })
        .collect();
    let sidecar = Sidecar {
        config: cfg,
        precision: F::PRECISION,
        len: params.len(),
        tensors,
    };
    let mut bytes = Vec::with_capacity(params.len() * F::WIDTH);
    for &v in params.as_slice() {
        v.put(&mut bytes);
    }
    fs::write(path, bytes).with_context(|| format!("writing checkpoint {}", path.display()))?;
    let side = sidecar_path(path);
    fs::write(&side, crate::format::json(&sidecar)?)
        .with_context(|| format!("writing sidecar {}", side.display()))?;
    Ok(())
}

fn read<F: Stored>(sidecar: &Sidecar, bytes: &[u8]) -> Result<ModelParams<F>> {
    if bytes.len() != sidecar.len * F::WIDTH {
        bail!(
            "checkpoint holds {} bytes, sidecar describes {} values of {} bytes",
            bytes.len(),
            sidecar.len,
            F::WIDTH
        );
    }
    let data = bytes.chunks_exact(F::WIDTH).map(F::get).collect();
    Ok(ModelParams::from_flat(&sidecar.config, data)?)
}

/// A loaded checkpoint in its stored precision.
#[derive(Debug, Clone)]
pub enum AnyModel {
    F32(ModelParams<f32>),
    F64(ModelParams<f64>),
}

impl AnyModel {
    pub fn config(&self) -> &ModelConfig {
        match self {
            AnyModel::F32(m) => m.config(),
            AnyModel::F64(m) => m.config(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            AnyModel::F32(m) => write(m, path),
            AnyModel::F64(m) => write(m, path),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).with_context(|| format!("reading sidecar {}", side.display()))?;
        let sidecar: Sidecar = serde_json::from_str(&text).with_context(|| format!("parsing sidecar {}", side.display()))?;
        let bytes = fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        Ok(match sidecar.precision {
            Precision::F32 => AnyModel::F32(read(&sidecar, &bytes)?),
            Precision::F64 => AnyModel::F64(read(&sidecar, &bytes)?),
        })
    }
}

impl LanguageModel for AnyModel {
    fn vocab_size(&self) -> usize {
        self.config().vocab_size
    }

    fn max_context(&self) -> usize {
        self.config().max_context
    }

    fn next_token_distribution(&self, context: &[Token], base: f64) -> abuckets_core::Result<TokenDistribution> {
        match self {
            AnyModel::F32(m) => m.next_token_distribution(context, base),
            AnyModel::F64(m) => m.next_token_distribution(context, base),
        }
    }
}
