//! Std-side companion of `abuckets-core`: checkpoint and CSV formats, a
//! threaded run executor, grid calibration of the base search, and the
//! subcommand implementations behind the `abuckets` binary.

pub mod calibrate;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod executor;
pub mod format;
