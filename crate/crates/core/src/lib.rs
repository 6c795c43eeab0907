//! Grapheme-level syllabification toolkit for Tenyidie.
//!
//! The pipeline: parse or synthesize a syllabified corpus ([`corpus`]),
//! convert syllable boundaries to per-letter S/C tags ([`tagging`]), gather
//! phonotactic statistics ([`phonotactics`]), train neural models ([`nn`],
//! [`crf`], [`seq2seq`], wrapped by [`model`]) or the inventory baseline
//! ([`baseline`]), and score them at word level ([`eval`]).

pub mod alphabet;
pub mod baseline;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod par;
pub mod phonotactics;
pub mod seq2seq;
pub mod tagging;

pub use error::{Error, Result};
