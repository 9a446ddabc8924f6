//! Attention buckets over rotary position embeddings.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithm of the
//! project; file formats, threading and the command-line driver live in the
//! `abuckets` companion crate.
//!
//! * [`waveform`]: the upper bound of the pre-softmax query/key score as a
//!   function of relative distance, and its peak/trough locator.
//! * [`search`]: the discrete base grid and the greedy interleaving search.
//! * [`model`]: a miniature decoder-only RoPE transformer whose rotary base
//!   is chosen per call, with hand-written backprop and a trainer.
//! * [`ensemble`]: confidence-weighted mixing of per-base next-token
//!   distributions and greedy decoding on top of it.
//! * [`kv`]: the synthetic key/value retrieval task with exact positional
//!   anchoring.

#![no_std]

extern crate alloc;

pub mod ensemble;
pub mod distribution;
pub mod error;
pub mod kv;
pub mod model;
pub mod search;
pub mod waveform;

pub use distribution::TokenDistribution;
pub use error::{Error, Result};

/// Token identifier.
pub type Token = u32;
