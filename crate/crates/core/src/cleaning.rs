//! The corpus filtering cascade and its row-count ledger.
//!
//! Every filter drops whole pairs and never edits the text of a surviving
//! pair. Whitespace trimming is only used to decide emptiness and source
//! copies.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{ParallelCorpus, SentencePair};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LengthUnit {
    Characters,
    WhitespaceTokens,
}

impl LengthUnit {
    pub fn measure(self, text: &str) -> usize {
        match self {
            LengthUnit::Characters => text.chars().count(),
            LengthUnit::WhitespaceTokens => text.split_whitespace().count(),
        }
    }
}

impl FromStr for LengthUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chars" | "characters" => Ok(LengthUnit::Characters),
            "tokens" | "whitespace_tokens" | "whitespace-tokens" => Ok(LengthUnit::WhitespaceTokens),
            _ => Err(Error::Config(format!("unknown length unit {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DedupKey {
    Pair,
    Source,
    Target,
}

impl FromStr for DedupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair" => Ok(DedupKey::Pair),
            "source" => Ok(DedupKey::Source),
            "target" => Ok(DedupKey::Target),
            _ => Err(Error::Config(format!("unknown dedup key {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub max_length: usize,
    pub length_unit: LengthUnit,
    pub max_ratio: f64,
    pub dedup_key: DedupKey,
    pub score_threshold: Option<f64>,
    pub source_copy_check: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            max_length: 200,
            length_unit: LengthUnit::WhitespaceTokens,
            max_ratio: 9.0,
            dedup_key: DedupKey::Pair,
            score_threshold: None,
            source_copy_check: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_length == 0 {
            return Err(Error::Config("max_length must be positive".into()));
        }
        if self.max_ratio.is_nan() || self.max_ratio < 1.0 {
            return Err(Error::Config(format!("max_ratio must be >= 1, got {}", self.max_ratio)));
        }
        if let Some(t) = self.score_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::Config(format!("score threshold {t} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

pub const STAGE_LOW_SCORE: &str = "Low-Score Rows Deleted";
pub const STAGE_EMPTY: &str = "Rows with Empty Cells Deleted";
pub const STAGE_DUPLICATES: &str = "Duplicates Deleted";
pub const STAGE_SOURCE_COPIES: &str = "Source-Copied Rows Deleted";
pub const STAGE_TOO_LONG: &str = "Too-Long Source/Target Deleted";

/// Width the stage name is padded to in the human-readable ledger.
const STAGE_WIDTH: usize = 34;
const LEDGER_HEADER: &str = "# filter-ledger v1";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FilterLedger {
    pub initial_rows: usize,
    pub stages: Vec<(String, usize)>,
}

impl FilterLedger {
    pub fn new(initial_rows: usize) -> Self {
        FilterLedger {
            initial_rows,
            stages: Vec::new(),
        }
    }

    pub fn record(&mut self, stage: &str, rows_after: usize) {
        self.stages.push((stage.to_owned(), rows_after));
    }

    pub fn final_rows(&self) -> usize {
        self.stages.last().map_or(self.initial_rows, |s| s.1)
    }

    pub fn is_monotone(&self) -> bool {
        let mut prev = self.initial_rows;
        self.stages.iter().all(|&(_, n)| {
            let ok = n <= prev;
            prev = n;
            ok
        })
    }

    /// Machine-readable form: a version header, then `stage<TAB>rows` lines,
    /// the first being the initial row count.
    pub fn to_report(&self) -> String {
        let mut out = format!("{LEDGER_HEADER}\ninitial\t{}\n", self.initial_rows);
        for (name, rows) in &self.stages {
            out.push_str(&format!("{name}\t{rows}\n"));
        }
        out
    }

    pub fn from_report(text: &str) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::ModelFormat {
            line,
            message: message.to_owned(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, LEDGER_HEADER)) => {}
            _ => return Err(bad(1, "missing ledger header")),
        }
        let mut ledger: Option<FilterLedger> = None;
        for (i, line) in lines {
            let (name, rows) = line
                .split_once('\t')
                .ok_or_else(|| bad(i + 1, "expected stage<TAB>rows"))?;
            let rows: usize = rows.parse().map_err(|_| bad(i + 1, "bad row count"))?;
            match ledger.as_mut() {
                None if name == "initial" => ledger = Some(FilterLedger::new(rows)),
                None => return Err(bad(i + 1, "first record must be the initial count")),
                Some(l) => l.record(name, rows),
            }
        }
        ledger.ok_or_else(|| bad(2, "missing initial count"))
    }
}

impl fmt::Display for FilterLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Dataframe shape (rows, columns): ({}, 2)", self.initial_rows)?;
        for (name, rows) in &self.stages {
            writeln!(f, "--- {name:<STAGE_WIDTH$} --> Rows: {rows}")?;
        }
        Ok(())
    }
}

fn is_blank(s: &str) -> bool {
    s.trim().is_empty()
}

fn keep(corpus: ParallelCorpus, mut pred: impl FnMut(&SentencePair) -> bool) -> ParallelCorpus {
    let mut corpus = corpus;
    corpus.pairs.retain(|p| pred(p));
    corpus
}

/// Drops pairs whose source or target is empty or whitespace-only.
pub fn remove_empty(corpus: ParallelCorpus) -> ParallelCorpus {
    keep(corpus, |p| !is_blank(p.source()) && !is_blank(p.target()))
}

/// Keeps the first occurrence of each key.
pub fn dedup_pairs(corpus: ParallelCorpus, key: DedupKey) -> ParallelCorpus {
    let mask: Vec<bool> = {
        let mut seen: HashSet<(&str, &str)> = HashSet::with_capacity(corpus.len());
        corpus
            .pairs
            .iter()
            .map(|p| {
                let k = match key {
                    DedupKey::Pair => (p.source(), p.target()),
                    DedupKey::Source => (p.source(), ""),
                    DedupKey::Target => ("", p.target()),
                };
                seen.insert(k)
            })
            .collect()
    };
    let mut flags = mask.into_iter();
    keep(corpus, |_| flags.next().unwrap_or(false))
}

/// Drops pairs whose trimmed source equals the trimmed target (case-sensitive).
pub fn remove_source_copies(corpus: ParallelCorpus) -> ParallelCorpus {
    keep(corpus, |p| p.source().trim() != p.target().trim())
}

/// Length and length-ratio predicate. Pairs with a zero-length side fail.
pub fn length_ok(pair: &SentencePair, max_length: usize, unit: LengthUnit, max_ratio: f64) -> bool {
    let ls = unit.measure(pair.source());
    let lt = unit.measure(pair.target());
    let (short, long) = if ls <= lt { (ls, lt) } else { (lt, ls) };
    short > 0 && long <= max_length && (long as f64) <= max_ratio * short as f64
}

pub fn filter_length(corpus: ParallelCorpus, max_length: usize, unit: LengthUnit, max_ratio: f64) -> ParallelCorpus {
    keep(corpus, |p| length_ok(p, max_length, unit, max_ratio))
}

/// Keeps pairs scored strictly above `threshold` and pairs without a score.
pub fn filter_score(corpus: ParallelCorpus, threshold: f64) -> ParallelCorpus {
    keep(corpus, |p| p.score().is_none_or(|s| s > threshold))
}

/// Runs the cascade in its fixed order, recording the row count after each stage:
/// score filter (when configured), empty rows, duplicates, source copies
/// (when enabled), length, empty rows.
pub fn run_pipeline(corpus: ParallelCorpus, config: &FilterConfig) -> (ParallelCorpus, FilterLedger) {
    let mut ledger = FilterLedger::new(corpus.len());
    let mut c = corpus;
    if let Some(t) = config.score_threshold {
        c = filter_score(c, t);
        ledger.record(STAGE_LOW_SCORE, c.len());
    }
    c = remove_empty(c);
    ledger.record(STAGE_EMPTY, c.len());
    c = dedup_pairs(c, config.dedup_key);
    ledger.record(STAGE_DUPLICATES, c.len());
    if config.source_copy_check {
        c = remove_source_copies(c);
        ledger.record(STAGE_SOURCE_COPIES, c.len());
    }
    c = filter_length(c, config.max_length, config.length_unit, config.max_ratio);
    ledger.record(STAGE_TOO_LONG, c.len());
    c = remove_empty(c);
    ledger.record(STAGE_EMPTY, c.len());
    (c, ledger)
}
