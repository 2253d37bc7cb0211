//! Model files and vocabulary exports.
//!
//! A model file is UTF-8 text; `\t` below stands for a tab:
//!
//! ```text
//! mtprep-subword v1
//! type\tunigram
//! marker\t▁
//! byte_fallback\ttrue
//! split_digits\tfalse
//! pieces\t<N>
//! <piece>\t<log-probability | frequency>     (N lines, model order)
//! merges\t<M>                                (BPE only)
//! <left>\t<right>                            (M lines, rank order)
//! ```
//!
//! Floats are written in shortest round-trip form, so save/load is bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use super::{BpeModel, ModelType, SubwordModel, UnigramModel, SPECIALS};
use crate::error::{Error, Result};

pub const MODEL_HEADER: &str = "mtprep-subword v1";

fn render(model: &SubwordModel) -> String {
    let mut out = String::new();
    let (byte_fallback, split_digits) = match model {
        SubwordModel::Bpe(m) => (m.byte_fallback, m.split_digits),
        SubwordModel::Unigram(m) => (m.byte_fallback(), m.split_digits()),
    };
    out.push_str(&format!(
        "{MODEL_HEADER}\ntype\t{}\nmarker\t{}\nbyte_fallback\t{byte_fallback}\nsplit_digits\t{split_digits}\n",
        model.model_type(),
        model.marker()
    ));
    match model {
        SubwordModel::Bpe(m) => {
            out.push_str(&format!("pieces\t{}\n", m.vocab.len()));
            for (p, f) in &m.vocab {
                out.push_str(&format!("{p}\t{f}\n"));
            }
            out.push_str(&format!("merges\t{}\n", m.merges.len()));
            for (l, r) in &m.merges {
                out.push_str(&format!("{l}\t{r}\n"));
            }
        }
        SubwordModel::Unigram(m) => {
            out.push_str(&format!("pieces\t{}\n", m.len()));
            for (p, l) in m.pieces() {
                out.push_str(&format!("{p}\t{l}\n"));
            }
        }
    }
    out
}

pub fn save_model(model: &SubwordModel, path: &Path) -> Result<()> {
    fs::write(path, render(model))?;
    Ok(())
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, message: impl Into<String>) -> Error {
        Error::ModelFormat {
            line: self.last,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok(l)
            }
            None => {
                self.last += 1;
                Err(self.err("unexpected end of file"))
            }
        }
    }

    fn pair(&mut self) -> Result<(&'a str, &'a str)> {
        let line = self.next()?;
        line.split_once('\t')
            .ok_or_else(|| self.err("expected two tab-separated fields"))
    }

    fn field<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (k, v) = self.pair()?;
        if k != key {
            return Err(self.err(format!("expected {key:?}, found {k:?}")));
        }
        v.parse().map_err(|_| self.err(format!("bad value for {key}: {v:?}")))
    }
}

pub fn parse_model(text: &str) -> Result<SubwordModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    if lines.next()? != MODEL_HEADER {
        return Err(lines.err(format!("expected header {MODEL_HEADER:?}")));
    }
    let model_type: ModelType = lines.field("type")?;
    let marker: char = lines.field("marker")?;
    let byte_fallback: bool = lines.field("byte_fallback")?;
    let split_digits: bool = lines.field("split_digits")?;
    let n: usize = lines.field("pieces")?;
    let model = match model_type {
        ModelType::Bpe => {
            let mut vocab = Vec::with_capacity(n);
            for _ in 0..n {
                let (p, f) = lines.pair()?;
                let f = f.parse().map_err(|_| lines.err(format!("bad frequency {f:?}")))?;
                vocab.push((p.to_owned(), f));
            }
            let m: usize = lines.field("merges")?;
            let mut merges = Vec::with_capacity(m);
            for _ in 0..m {
                let (l, r) = lines.pair()?;
                merges.push((l.to_owned(), r.to_owned()));
            }
            SubwordModel::Bpe(BpeModel::new(marker, byte_fallback, split_digits, vocab, merges)?)
        }
        ModelType::Unigram => {
            let mut pieces = Vec::with_capacity(n);
            for _ in 0..n {
                let (p, l) = lines.pair()?;
                let l = l.parse().map_err(|_| lines.err(format!("bad log-probability {l:?}")))?;
                pieces.push((p.to_owned(), l));
            }
            SubwordModel::Unigram(UnigramModel::from_pieces(pieces, marker, byte_fallback, split_digits)?)
        }
    };
    if let Some((i, extra)) = lines.inner.find(|(_, l)| !l.is_empty()) {
        return Err(Error::ModelFormat {
            line: i + 1,
            message: format!("trailing content {extra:?}"),
        });
    }
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<SubwordModel> {
    parse_model(&fs::read_to_string(path)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabFormat {
    /// One piece per line, for NMT frameworks that add their own special tokens.
    FrameworkTokens,
    /// `piece<TAB>score`: log-probability for unigram, negative rank for BPE.
    PieceLogprob,
}

impl FromStr for VocabFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tokens" | "framework-tokens" | "framework_tokens" => Ok(VocabFormat::FrameworkTokens),
            "piece-logprob" | "piece_logprob" => Ok(VocabFormat::PieceLogprob),
            _ => Err(Error::Config(format!("unknown vocab format {s:?}"))),
        }
    }
}

/// `(piece, score)` in model order.
pub fn vocab_scores(model: &SubwordModel) -> Vec<(String, f64)> {
    match model {
        SubwordModel::Bpe(m) => m
            .vocab
            .iter()
            .enumerate()
            .map(|(i, (p, _))| (p.clone(), -(i as f64)))
            .collect(),
        SubwordModel::Unigram(m) => m.pieces().to_vec(),
    }
}

/// Writes the vocabulary. `<unk>`, `<s>` and `</s>` are only written (first,
/// in that order) when `include_specials` is set.
pub fn export_vocab(model: &SubwordModel, path: &Path, format: VocabFormat, include_specials: bool) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    if include_specials {
        for s in SPECIALS {
            match format {
                VocabFormat::FrameworkTokens => writeln!(out, "{s}")?,
                VocabFormat::PieceLogprob => writeln!(out, "{s}\t0")?,
            }
        }
    }
    for (p, score) in vocab_scores(model) {
        if SPECIALS.contains(&p.as_str()) {
            continue;
        }
        match format {
            VocabFormat::FrameworkTokens => writeln!(out, "{p}")?,
            VocabFormat::PieceLogprob => writeln!(out, "{p}\t{score}")?,
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_piece_logprob(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let bad = |message: &str| Error::ModelFormat {
                line: i + 1,
                message: message.to_owned(),
            };
            let (p, s) = line.split_once('\t').ok_or_else(|| bad("expected piece<TAB>score"))?;
            Ok((p.to_owned(), s.parse().map_err(|_| bad("bad score"))?))
        })
        .collect()
}
