//! Sequence-level knowledge distillation for neural machine translation.
//!
//! The crate trains a small attention encoder-decoder (bidirectional GRU
//! encoder, additive attention, GRU decoder), builds teacher translations of
//! a training corpus (single model, probability-averaged ensemble, or
//! oracle sentence-BLEU pick from the final beam), filters training pairs by
//! TER against the original reference, and retrains student models on the
//! resulting data.
//!
//! Module map:
//!
//! - [`textcore`]: vocabularies, parallel corpora, per-epoch shuffles
//! - [`metrics`]: smoothed sentence BLEU, corpus BLEU-4, TER with shifts
//! - [`bpe`]: byte-pair-encoding merge learning and application
//! - [`nnmodel`]: the encoder-decoder, exact gradients, SGD training, checkpoints
//! - [`decode`]: beam search, ensemble scoring, final-candidate selection
//! - [`distill`]: teacher forward translation, data recipes, filtering, reports
//! - [`cli`]: the command-line frontend used by the `nmt-distill` binary

pub mod bpe;
pub mod cli;
pub mod decode;
pub mod distill;
mod error;
pub mod metrics;
pub mod nnmodel;
pub mod textcore;

pub use error::{Error, Result};
