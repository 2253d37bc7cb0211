//! Data preparation for machine translation: parallel-corpus I/O and
//! cleaning, rule-based pretokenization and truecasing, trainable subword
//! models (BPE, Unigram, byte fallback) and BLEU with declared metric
//! tokenization.

pub mod cleaning;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod pretokenize;
pub mod rng;
pub mod subword;

pub use error::{Error, Result};
