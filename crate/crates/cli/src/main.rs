use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use abuckets::calibrate::{calibrate, Grid, Target};
use abuckets::checkpoint::Precision;
use abuckets::commands;
use abuckets::config::*;
use abuckets::format;

#[derive(Debug, Parser)]
#[command(name = "abuckets", version, about = "Rotary-base search, ensemble decoding and KV retrieval experiments")]
struct Cli {
    /// Floating-point precision for training.
    #[arg(long, global = true, value_enum, default_value = "f64")]
    precision: Precision,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Upper-bound attention curve as CSV.
    Waveform {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        flags: WaveformFlags,
    },
    /// Peak and trough positions as JSON.
    Extrema {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        flags: ExtremaFlags,
    },
    /// Greedy base search with its round log.
    Search {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        flags: SearchFlags,
    },
    /// Train the toy model on generated retrieval tasks.
    Train {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Greedy or ensemble decoding with a per-step trace.
    Decode {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        flags: DecodeFlags,
    },
    /// Peak versus trough retrieval accuracy.
    EvalKv {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        flags: EvalKvFlags,
    },
    /// Grid search for the extrema settings that reproduce target base sets.
    Calibrate {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        flags: CalibrateFlags,
    },
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => io::stdout().write_all(text.as_bytes()).context("writing to stdout"),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Waveform { io, flags } => {
            let cfg: WaveformConfig = resolve(io.config.as_deref(), &flags)?;
            emit(io.out.as_deref(), &commands::waveform(&cfg)?)
        }
        Command::Extrema { io, flags } => {
            let cfg: ExtremaConfig = resolve(io.config.as_deref(), &flags)?;
            emit(io.out.as_deref(), &format::json(&commands::extrema(&cfg)?)?)
        }
        Command::Search { io, flags } => {
            let cfg: SearchConfig = resolve(io.config.as_deref(), &flags)?;
            emit(io.out.as_deref(), &format::json(&commands::search(&cfg)?)?)
        }
        Command::Train { io, flags } => {
            let cfg: TrainConfig = resolve(io.config.as_deref(), &flags)?;
            let out = io.out.context("train needs --out for the checkpoint")?;
            let trained = commands::train(&cfg, cli.precision)?;
            trained.model.save(&out)?;
            let loss_path = cfg.loss.clone().unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".loss.csv");
                PathBuf::from(p)
            });
            emit(Some(&loss_path), &format::loss_csv(&trained.losses))
        }
        Command::Decode { io, flags } => {
            let cfg: DecodeConfig = resolve(io.config.as_deref(), &flags)?;
            emit(io.out.as_deref(), &format::json(&commands::decode(&cfg)?)?)
        }
        Command::EvalKv { io, flags } => {
            let cfg: EvalKvConfig = resolve(io.config.as_deref(), &flags)?;
            let eval = commands::eval_kv(&cfg)?;
            if let Some(p) = &cfg.tasks_out {
                emit(Some(p), &commands::tasks_jsonl(&eval.tasks)?)?;
            }
            if let Some(p) = &cfg.records {
                emit(Some(p), &format::json(&eval.report)?)?;
            }
            emit(io.out.as_deref(), &format::json(&eval.report.summary())?)
        }
        Command::Calibrate { io, flags } => {
            let cfg: CalibrateConfig = resolve(io.config.as_deref(), &flags)?;
            let path = cfg.targets.as_deref().context("calibrate needs --targets")?;
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let targets: Vec<Target> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let grid = Grid {
                b_min: cfg.b_min,
                b_max: cfg.b_max,
                head_dim: cfg.head_dim,
                max_context: cfg.max_context,
                max_extrema: cfg.max_extrema,
                max_period: cfg.max_period,
            };
            let scores = calibrate(&targets, &grid)?;
            let mut text = String::new();
            for s in scores.iter().take(cfg.top) {
                text.push_str(&serde_json::to_string(s)?);
                text.push('\n');
            }
            emit(io.out.as_deref(), &text)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
