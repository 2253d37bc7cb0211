//! Subword models: BPE with merge learning and dropout, Unigram LM with EM
//! training and lattice sampling, UTF-8 byte fallback, and vocabulary export.
//!
//! Both model types share the same word preparation: text is split on
//! whitespace and each word is prefixed with a boundary marker (`▁` by
//! default), so decoding maps the marker back to a space. Whitespace runs
//! therefore decode to single spaces; that is the only loss in an
//! encode/decode round trip when byte fallback is enabled.

mod bpe;
mod io;
mod unigram;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::str::FromStr;

use rand::RngCore;

pub use self::bpe::{train_bpe, BpeModel};
pub use self::io::{export_vocab, load_model, read_piece_logprob, save_model, VocabFormat, MODEL_HEADER};
pub use self::unigram::{train_unigram, UnigramModel, UnigramTrainer};

use crate::error::{Error, Result};
use crate::pretokenize::is_digit;
use crate::rng;

pub const DEFAULT_MARKER: char = '\u{2581}';
pub const UNK: &str = "<unk>";
pub const SPECIALS: [&str; 3] = ["<unk>", "<s>", "</s>"];

pub fn byte_piece(b: u8) -> String {
    format!("<0x{b:02X}>")
}

/// Parses `<0xHH>` (uppercase hex) into its byte.
pub fn parse_byte_piece(piece: &str) -> Option<u8> {
    let hex = piece.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2 || !hex.bytes().all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b)) {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

/// The `<0xHH>` pieces for the UTF-8 encoding of `c`.
pub fn byte_fallback_pieces(c: char) -> Vec<String> {
    let mut buf = [0u8; 4];
    c.encode_utf8(&mut buf).bytes().map(byte_piece).collect()
}

pub fn all_byte_pieces() -> impl Iterator<Item = String> {
    (0..=255u8).map(byte_piece)
}

/// Turns pieces back into text. Runs of byte pieces are UTF-8 decoded with
/// invalid sequences replaced by U+FFFD; the marker becomes a space and a
/// single leading space is dropped.
pub fn decode_pieces<S: AsRef<str>>(pieces: &[S], marker: char) -> String {
    let mut text = String::new();
    let mut bytes = Vec::new();
    for piece in pieces.iter().map(AsRef::as_ref) {
        match parse_byte_piece(piece) {
            Some(b) => bytes.push(b),
            None => {
                if !bytes.is_empty() {
                    text.push_str(&String::from_utf8_lossy(&bytes));
                    bytes.clear();
                }
                text.push_str(piece);
            }
        }
    }
    if !bytes.is_empty() {
        text.push_str(&String::from_utf8_lossy(&bytes));
    }
    let text = text.replace(marker, " ");
    match text.strip_prefix(' ') {
        Some(rest) => rest.to_owned(),
        None => text,
    }
}

/// Marker-prefixed words of a line, in order.
pub fn line_words(line: &str, marker: char) -> impl Iterator<Item = String> + '_ {
    line.split_whitespace().map(move |w| {
        let mut s = String::with_capacity(w.len() + marker.len_utf8());
        s.push(marker);
        s.push_str(w);
        s
    })
}

/// Word frequency table: marker-prefixed word → count, in sorted word order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WordTable {
    pub words: BTreeMap<String, u64>,
    pub marker: char,
    /// Digits are kept as single-character symbols that never merge.
    pub split_digits: bool,
}

impl WordTable {
    /// Symbol sequence of a word: one symbol per character.
    pub fn symbols(word: &str) -> Vec<String> {
        word.chars().map(String::from).collect()
    }

    /// Character occurrence counts weighted by word frequency.
    pub fn char_counts(&self) -> HashMap<char, u64> {
        let mut counts = HashMap::new();
        for (w, &n) in &self.words {
            for c in w.chars() {
                *counts.entry(c).or_default() += n;
            }
        }
        counts
    }
}

pub fn prepare_words<S: AsRef<str>>(lines: &[S], marker: char, split_digits: bool) -> WordTable {
    let mut words = BTreeMap::new();
    for line in lines {
        for w in line_words(line.as_ref(), marker) {
            *words.entry(w).or_default() += 1;
        }
    }
    WordTable {
        words,
        marker,
        split_digits,
    }
}

/// True when a piece may not take part in a merge because of `split_digits`.
pub(crate) fn digit_barred(piece: &str, split_digits: bool) -> bool {
    split_digits && piece.chars().any(is_digit)
}

/// Characters kept as dedicated pieces: the most frequent characters whose
/// counts cover `coverage` of all character occurrences (the marker is always
/// kept). Ordered by count descending, then code point.
pub fn covered_chars(table: &WordTable, coverage: f64) -> Vec<(char, u64)> {
    let mut chars: Vec<(char, u64)> = table.char_counts().into_iter().collect();
    chars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: u64 = chars.iter().map(|c| c.1).sum();
    let mut kept = Vec::new();
    let mut covered = 0u64;
    for (c, n) in chars {
        if (covered as f64) >= coverage * total as f64 && c != table.marker {
            continue;
        }
        covered += n;
        kept.push((c, n));
    }
    if !kept.iter().any(|&(c, _)| c == table.marker) {
        kept.push((table.marker, 0));
    }
    kept
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelType {
    Bpe,
    Unigram,
}

impl FromStr for ModelType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpe" => Ok(ModelType::Bpe),
            "unigram" => Ok(ModelType::Unigram),
            _ => Err(Error::Config(format!("unknown model type {s:?}"))),
        }
    }
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelType::Bpe => "bpe",
            ModelType::Unigram => "unigram",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnigramParams {
    /// Multi-character seed pieces; `None` means 4 × vocab_size, capped at 1e6.
    pub seed_vocab_size: Option<usize>,
    pub max_piece_length: usize,
    pub em_iterations: usize,
    pub prune_fraction: f64,
}

impl Default for UnigramParams {
    fn default() -> Self {
        UnigramParams {
            seed_vocab_size: None,
            max_piece_length: 16,
            em_iterations: 2,
            prune_fraction: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubwordTrainConfig {
    pub model_type: ModelType,
    pub vocab_size: usize,
    pub character_coverage: f64,
    pub byte_fallback: bool,
    pub split_digits: bool,
    pub marker: char,
    /// Recorded for reproducibility; training itself draws no random numbers.
    pub seed: u64,
    pub unigram: UnigramParams,
}

impl Default for SubwordTrainConfig {
    fn default() -> Self {
        SubwordTrainConfig {
            model_type: ModelType::Unigram,
            vocab_size: 32_000,
            character_coverage: 1.0,
            byte_fallback: false,
            split_digits: false,
            marker: DEFAULT_MARKER,
            seed: 0,
            unigram: UnigramParams::default(),
        }
    }
}

impl SubwordTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        if !(self.character_coverage > 0.0 && self.character_coverage <= 1.0) {
            return Err(Error::Config(format!(
                "character_coverage must be in (0, 1], got {}",
                self.character_coverage
            )));
        }
        if self.marker.is_whitespace() {
            return Err(Error::Config("marker must not be whitespace".into()));
        }
        let u = &self.unigram;
        if u.max_piece_length == 0 || u.em_iterations == 0 {
            return Err(Error::Config(
                "max_piece_length and em_iterations must be positive".into(),
            ));
        }
        if !(u.prune_fraction > 0.0 && u.prune_fraction < 1.0) {
            return Err(Error::Config(format!(
                "prune_fraction must be in (0, 1), got {}",
                u.prune_fraction
            )));
        }
        Ok(())
    }

    pub fn seed_vocab_size(&self) -> usize {
        self.unigram
            .seed_vocab_size
            .unwrap_or_else(|| (4 * self.vocab_size).min(1_000_000))
    }
}

/// How encoding may deviate from the single best segmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Regularization {
    None,
    /// BPE: skip each candidate merge with this probability.
    Dropout(f64),
    /// Unigram: sample from the lattice with scores raised to this power.
    Sample(f64),
}

/// A trained model of either type.
#[derive(Clone, Debug, PartialEq)]
pub enum SubwordModel {
    Bpe(BpeModel),
    Unigram(UnigramModel),
}

impl SubwordModel {
    pub fn model_type(&self) -> ModelType {
        match self {
            SubwordModel::Bpe(_) => ModelType::Bpe,
            SubwordModel::Unigram(_) => ModelType::Unigram,
        }
    }

    pub fn marker(&self) -> char {
        match self {
            SubwordModel::Bpe(m) => m.marker,
            SubwordModel::Unigram(m) => m.marker(),
        }
    }

    pub fn byte_fallback(&self) -> bool {
        match self {
            SubwordModel::Bpe(m) => m.byte_fallback,
            SubwordModel::Unigram(m) => m.byte_fallback(),
        }
    }

    /// Piece strings in model order.
    pub fn pieces(&self) -> Vec<&str> {
        match self {
            SubwordModel::Bpe(m) => m.vocab.iter().map(|(p, _)| p.as_str()).collect(),
            SubwordModel::Unigram(m) => m.pieces().iter().map(|(p, _)| p.as_str()).collect(),
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(self.pieces().into_iter().map(str::to_owned).collect())
    }

    /// Deterministic segmentation.
    pub fn encode(&self, text: &str) -> Result<Vec<String>> {
        match self {
            SubwordModel::Bpe(m) => Ok(m.encode(text)),
            SubwordModel::Unigram(m) => m.encode(text),
        }
    }

    pub fn encode_with(&self, text: &str, reg: Regularization, rng: &mut impl RngCore) -> Result<Vec<String>> {
        match (self, reg) {
            (_, Regularization::None) => self.encode(text),
            (SubwordModel::Bpe(m), Regularization::Dropout(p)) => Ok(m.encode_with_dropout(text, p, rng)),
            (SubwordModel::Unigram(m), Regularization::Sample(alpha)) => m.sample(text, alpha, rng),
            (SubwordModel::Bpe(_), Regularization::Sample(_)) => {
                Err(Error::Config("lattice sampling needs a unigram model".into()))
            }
            (SubwordModel::Unigram(_), Regularization::Dropout(_)) => {
                Err(Error::Config("dropout needs a BPE model".into()))
            }
        }
    }

    pub fn decode<S: AsRef<str>>(&self, pieces: &[S]) -> String {
        decode_pieces(pieces, self.marker())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_model(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_model(path)
    }
}

pub fn train<S: AsRef<str>>(lines: &[S], config: &SubwordTrainConfig) -> Result<SubwordModel> {
    Ok(match config.model_type {
        ModelType::Bpe => SubwordModel::Bpe(train_bpe(lines, config)?),
        ModelType::Unigram => SubwordModel::Unigram(train_unigram(lines, config)?),
    })
}

/// BPE encoding of `text` with merge dropout `p`, seeded.
pub fn encode_bpe(model: &BpeModel, text: &str, dropout: f64, seed: u64) -> Vec<String> {
    model.encode_with_dropout(text, dropout, &mut rng::seeded(seed))
}

pub fn encode_unigram_viterbi(model: &UnigramModel, text: &str) -> Result<Vec<String>> {
    model.encode(text)
}

pub fn sample_unigram(model: &UnigramModel, text: &str, alpha: f64, seed: u64) -> Result<Vec<String>> {
    model.sample(text, alpha, &mut rng::seeded(seed))
}

/// An ordered token list with fast membership.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    set: HashSet<String>,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>) -> Self {
        let set = tokens.iter().cloned().collect();
        Vocabulary { tokens, set }
    }

    /// One token per line; with `first_column`, only the text before a tab is used.
    pub fn from_text(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(|l| l.split('\t').next().unwrap_or(""))
                .filter(|t| !t.is_empty())
                .map(str::to_owned)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_text(&std::fs::read_to_string(path)?))
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.set.contains(token)
    }
}

/// Fraction of whitespace tokens in `lines` missing from `vocab` (0 for no tokens).
pub fn oov_rate<S: AsRef<str>>(lines: &[S], vocab: &Vocabulary) -> f64 {
    let (mut total, mut missing) = (0u64, 0u64);
    for line in lines {
        for tok in line.as_ref().split_whitespace() {
            total += 1;
            if !vocab.contains(tok) {
                missing += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        missing as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prepare_counts_marker_words() {
        let t = prepare_words(&["ab ab abc"], DEFAULT_MARKER, false);
        assert_eq!(t.words.len(), 2);
        assert_eq!(t.words["▁ab"], 2);
        assert_eq!(t.words["▁abc"], 1);
        assert!(prepare_words(&[""], DEFAULT_MARKER, false).words.is_empty());

        let t = prepare_words(&["a12"], DEFAULT_MARKER, true);
        assert_eq!(WordTable::symbols("▁a12"), ["▁", "a", "1", "2"]);
        assert!(t.split_digits);
        assert!(digit_barred("1", true) && !digit_barred("a", true) && !digit_barred("1", false));
    }

    #[test]
    fn byte_pieces() {
        assert_eq!(byte_fallback_pieces('é'), ["<0xC3>", "<0xA9>"]);
        assert_eq!(byte_fallback_pieces('a'), ["<0x61>"]);
        assert_eq!(decode_pieces(&["<0xC3>", "<0xA9>"], DEFAULT_MARKER), "é");
        assert_eq!(parse_byte_piece("<0xff>"), None);
        assert_eq!(parse_byte_piece("<0xFF>"), Some(255));
        assert_eq!(parse_byte_piece("<0xF>"), None);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_pieces(&["▁Hello", "▁wor", "ld"], DEFAULT_MARKER), "Hello world");
        assert_eq!(decode_pieces(&["<0xE2>", "<0x88>", "<0xAE>"], DEFAULT_MARKER), "∮");
        assert_eq!(decode_pieces(&["▁a", "<0xE2>", "<0x88>"], DEFAULT_MARKER), "a\u{FFFD}");
        assert_eq!(decode_pieces::<&str>(&[], DEFAULT_MARKER), "");
    }

    #[test]
    fn oov_counts() {
        let v = Vocabulary::new(vec!["a".into(), "b".into()]);
        assert_eq!(oov_rate(&["a b c a"], &v), 0.25);
        assert_eq!(oov_rate(&["a b", "b"], &v), 0.0);
        assert_eq!(oov_rate::<&str>(&[], &v), 0.0);
    }

    #[test]
    fn coverage_keeps_frequent_prefix() {
        let t = prepare_words(&["aaaa aaaa b"], DEFAULT_MARKER, false);
        // ▁:3 a:8 b:1 → total 12
        let all: Vec<char> = covered_chars(&t, 1.0).iter().map(|c| c.0).collect();
        assert_eq!(all, ['a', '▁', 'b']);
        let most: Vec<char> = covered_chars(&t, 0.9).iter().map(|c| c.0).collect();
        assert_eq!(most, ['a', '▁']);
    }

    #[test]
    fn config_validation() {
        assert!(SubwordTrainConfig::default().validate().is_ok());
        let bad = SubwordTrainConfig {
            character_coverage: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(SubwordTrainConfig::default().seed_vocab_size(), 128_000);
    }
}
