//! Corpus and sentence BLEU with declared metric-internal tokenization.
//!
//! Both sides are tokenized with the scheme named in the signature, clipped
//! n-gram matches and totals (n = 1..4) are summed over the corpus, and the
//! score is `100 · BP · exp(Σ ln pₙ / N)`. `N` is normally 4; it drops to the
//! largest order for which the hypothesis has any n-grams at all, so a
//! non-empty hypothesis identical to its reference always scores 100.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::ops::AddAssign;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pretokenize::{pretokenize, PretokenizerKind};

pub const MAX_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricTokenizer {
    Intl13a,
    Char,
    /// Character-level stand-in for a Japanese morphological tokenizer.
    JaChar,
    None,
}

impl MetricTokenizer {
    pub fn name(self) -> &'static str {
        match self {
            MetricTokenizer::Intl13a => "13a",
            MetricTokenizer::Char => "char",
            MetricTokenizer::JaChar => "ja-char",
            MetricTokenizer::None => "none",
        }
    }
}

impl FromStr for MetricTokenizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "13a" | "intl13a" => Ok(MetricTokenizer::Intl13a),
            "char" => Ok(MetricTokenizer::Char),
            "ja-char" | "ja_char" => Ok(MetricTokenizer::JaChar),
            "none" => Ok(MetricTokenizer::None),
            _ => Err(Error::Config(format!("unknown metric tokenizer {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Smoothing {
    None,
    /// Zero-match orders count as `epsilon` matches.
    Floor(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricScheme {
    pub tokenizer: MetricTokenizer,
    pub smoothing: Smoothing,
}

impl Default for MetricScheme {
    fn default() -> Self {
        MetricScheme {
            tokenizer: MetricTokenizer::Intl13a,
            smoothing: Smoothing::None,
        }
    }
}

impl MetricScheme {
    pub fn new(tokenizer: MetricTokenizer, smoothing: Smoothing) -> Result<Self> {
        if let Smoothing::Floor(eps) = smoothing {
            if eps.is_nan() || eps <= 0.0 {
                return Err(Error::Config(format!("floor smoothing needs epsilon > 0, got {eps}")));
            }
        }
        Ok(MetricScheme { tokenizer, smoothing })
    }

    pub fn signature(&self) -> String {
        let smooth = match self.smoothing {
            Smoothing::None => "none".to_owned(),
            Smoothing::Floor(eps) => format!("floor-{eps}"),
        };
        format!(
            "nrefs:1|case:mixed|eff:yes|tok:{}|smooth:{smooth}|version:{}",
            self.tokenizer.name(),
            env!("CARGO_PKG_VERSION")
        )
    }
}

pub fn metric_tokenize(text: &str, tokenizer: MetricTokenizer) -> Vec<String> {
    let kind = match tokenizer {
        MetricTokenizer::Intl13a => PretokenizerKind::Intl13a,
        MetricTokenizer::Char | MetricTokenizer::JaChar => PretokenizerKind::Character,
        MetricTokenizer::None => PretokenizerKind::Whitespace,
    };
    pretokenize(text, &kind).expect("built-in tokenizers are infallible")
}

/// Every contiguous n-gram with its multiplicity.
pub fn ngram_counts<S: Eq + Hash>(tokens: &[S], n: usize) -> HashMap<&[S], u64> {
    let mut counts = HashMap::new();
    if n > 0 {
        for w in tokens.windows(n) {
            *counts.entry(w).or_default() += 1;
        }
    }
    counts
}

fn clipped<S: Eq + Hash>(hyp: &[S], reference: &[S], n: usize) -> (u64, u64) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matches = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matches, hyp.len().saturating_sub(n - 1) as u64)
}

/// Clipped n-gram matches and hypothesis n-gram total, summed over sentence pairs.
pub fn modified_precision<S: Eq + Hash>(hyps: &[Vec<S>], refs: &[Vec<S>], n: usize) -> Result<(u64, u64)> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            hyp: hyps.len(),
            reference: refs.len(),
        });
    }
    Ok(hyps.iter().zip(refs).fold((0, 0), |(m, t), (h, r)| {
        let (dm, dt) = clipped(h, r, n);
        (m + dm, t + dt)
    }))
}

/// `exp(1 − r/c)` capped at 1; zero when the hypothesis is empty.
pub fn brevity_penalty(hyp_len: u64, ref_len: u64) -> f64 {
    if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    }
}

/// Additive sufficient statistics for BLEU.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    pub fn from_tokens<S: Eq + Hash>(hyp: &[S], reference: &[S]) -> Self {
        let mut s = BleuStats {
            hyp_len: hyp.len() as u64,
            ref_len: reference.len() as u64,
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let (m, t) = clipped(hyp, reference, n);
            s.matches[n - 1] = m;
            s.totals[n - 1] = t;
        }
        s
    }
}

impl AddAssign for BleuStats {
    fn add_assign(&mut self, o: Self) {
        for n in 0..MAX_ORDER {
            self.matches[n] += o.matches[n];
            self.totals[n] += o.totals[n];
        }
        self.hyp_len += o.hyp_len;
        self.ref_len += o.ref_len;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BleuReport {
    pub score: f64,
    /// Modified precisions p1..p4 in [0, 1]; orders beyond `effective_order` are 0.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: u64,
    pub ref_len: u64,
    /// Number of n-gram orders entering the geometric mean.
    pub effective_order: usize,
    pub stats: BleuStats,
    pub signature: String,
}

impl BleuReport {
    pub fn from_stats(stats: BleuStats, scheme: &MetricScheme) -> Self {
        let bp = brevity_penalty(stats.hyp_len, stats.ref_len);
        let order = stats.totals.iter().take_while(|&&t| t > 0).count();
        let mut precisions = [0.0; MAX_ORDER];
        for (n, slot) in precisions.iter_mut().enumerate().take(order) {
            let (m, t) = (stats.matches[n], stats.totals[n]);
            *slot = match scheme.smoothing {
                Smoothing::Floor(eps) if m == 0 => eps / t as f64,
                _ => m as f64 / t as f64,
            };
        }
        let score = if order == 0 || precisions[..order].contains(&0.0) {
            0.0
        } else {
            let mean = precisions[..order].iter().map(|p| p.ln()).sum::<f64>() / order as f64;
            100.0 * bp * mean.exp()
        };
        BleuReport {
            score,
            precisions,
            brevity_penalty: bp,
            hyp_len: stats.hyp_len,
            ref_len: stats.ref_len,
            effective_order: order,
            stats,
            signature: scheme.signature(),
        }
    }

    /// Score recomputed from the report's own precisions and brevity penalty.
    pub fn recomputed_score(&self) -> f64 {
        let ps = &self.precisions[..self.effective_order];
        if ps.is_empty() || ps.contains(&0.0) {
            return 0.0;
        }
        100.0 * self.brevity_penalty * (ps.iter().map(|p| p.ln()).sum::<f64>() / ps.len() as f64).exp()
    }

    pub fn ratio(&self) -> f64 {
        self.hyp_len as f64 / self.ref_len as f64
    }

    /// Full-precision line record (the display form rounds; this does not).
    pub fn to_record(&self) -> String {
        let p = self.precisions.map(|p| p * 100.0);
        format!(
            "BLEU = {} {}/{}/{}/{} (BP = {}, ratio = {}, hyp_len = {}, ref_len = {}) sig:{}",
            self.score,
            p[0],
            p[1],
            p[2],
            p[3],
            self.brevity_penalty,
            self.ratio(),
            self.hyp_len,
            self.ref_len,
            self.signature
        )
    }

    /// Parses a record written by [`to_record`](Self::to_record) or the display form.
    /// n-gram counts are not part of the record and come back zeroed.
    pub fn parse_record(line: &str) -> Result<Self> {
        let bad = || Error::Config(format!("not a BLEU record: {line:?}"));
        let rest = line.trim().strip_prefix("BLEU = ").ok_or_else(bad)?;
        let (body, signature) = rest.split_once(" sig:").ok_or_else(bad)?;
        let (head, paren) = body.split_once(" (").ok_or_else(bad)?;
        let (score, precs) = head.split_once(' ').ok_or_else(bad)?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let mut precisions = [0.0; MAX_ORDER];
        let parts: Vec<&str> = precs.split('/').collect();
        if parts.len() != MAX_ORDER {
            return Err(bad());
        }
        for (slot, p) in precisions.iter_mut().zip(parts) {
            *slot = num(p)? / 100.0;
        }
        let mut fields = HashMap::new();
        for kv in paren.trim_end_matches(')').split(", ") {
            let (k, v) = kv.split_once(" = ").ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(bad);
        let hyp_len = get("hyp_len")?.parse().map_err(|_| bad())?;
        let ref_len = get("ref_len")?.parse().map_err(|_| bad())?;
        Ok(BleuReport {
            score: num(score)?,
            precisions,
            brevity_penalty: num(get("BP")?)?,
            hyp_len,
            ref_len,
            effective_order: precisions.iter().take_while(|&&p| p > 0.0).count(),
            stats: BleuStats::default(),
            signature: signature.trim().to_owned(),
        })
    }
}

impl fmt::Display for BleuReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.precisions.map(|p| p * 100.0);
        write!(
            f,
            "BLEU = {:.1} {:.1}/{:.1}/{:.1}/{:.1} (BP = {:.3}, ratio = {:.3}, hyp_len = {}, ref_len = {}) sig:{}",
            self.score,
            p[0],
            p[1],
            p[2],
            p[3],
            self.brevity_penalty,
            self.ratio(),
            self.hyp_len,
            self.ref_len,
            self.signature
        )
    }
}

/// Corpus BLEU over detokenized, line-aligned hypothesis and reference text.
pub fn corpus_bleu<S: AsRef<str>>(hyps: &[S], refs: &[S], scheme: &MetricScheme) -> Result<BleuReport> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            hyp: hyps.len(),
            reference: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut stats = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        let h = metric_tokenize(h.as_ref(), scheme.tokenizer);
        let r = metric_tokenize(r.as_ref(), scheme.tokenizer);
        stats += BleuStats::from_tokens(&h, &r);
    }
    Ok(BleuReport::from_stats(stats, scheme))
}

pub fn sentence_bleu(hyp: &str, reference: &str, scheme: &MetricScheme) -> Result<BleuReport> {
    corpus_bleu(&[hyp], &[reference], scheme)
}

/// `b.score − a.score`, or `None` when the signatures differ and the scores
/// are not comparable.
pub fn score_delta(a: &BleuReport, b: &BleuReport) -> Option<f64> {
    (a.signature == b.signature).then_some(b.score - a.score)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> MetricScheme {
        MetricScheme::new(MetricTokenizer::None, Smoothing::None).unwrap()
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn metric_tokenizers() {
        assert_eq!(
            metric_tokenize("猫が好き", MetricTokenizer::JaChar),
            ["猫", "が", "好", "き"]
        );
        assert_eq!(metric_tokenize("Hi!", MetricTokenizer::Intl13a), ["Hi", "!"]);
        assert_eq!(metric_tokenize("a b", MetricTokenizer::None), ["a", "b"]);
    }

    #[test]
    fn ngram_multiset() {
        let t = ["a", "b", "a"];
        let uni = ngram_counts(&t, 1);
        assert_eq!(uni[&["a"][..]], 2);
        assert_eq!(uni[&["b"][..]], 1);
        let bi = ngram_counts(&t, 2);
        assert_eq!(bi.len(), 2);
        assert!(bi.values().all(|&c| c == 1));
        assert!(ngram_counts(&t, 4).is_empty());
    }

    #[test]
    fn clipping() {
        let h = vec![toks("the the the the the the the")];
        let r = vec![toks("the cat is on the mat")];
        assert_eq!(modified_precision(&h, &r, 1).unwrap(), (2, 7));
        let same = vec![toks("a b c d e")];
        assert_eq!(modified_precision(&same, &same, 2).unwrap(), (4, 4));
        assert!(modified_precision(&h, &[], 1).is_err());
    }

    #[test]
    fn brevity() {
        assert_eq!(brevity_penalty(6, 6), 1.0);
        assert!((brevity_penalty(3, 6) - 0.367879441171442).abs() < 1e-12);
        assert_eq!(brevity_penalty(12, 6), 1.0);
        assert_eq!(brevity_penalty(0, 6), 0.0);
    }

    #[test]
    fn hand_counted_example_scores_zero() {
        let r = corpus_bleu(&["the cat sat on the mat"], &["the cat is on the mat"], &none()).unwrap();
        assert_eq!(r.stats.matches, [5, 3, 1, 0]);
        assert_eq!(r.stats.totals, [6, 5, 4, 3]);
        assert_eq!(r.precisions[..3], [5.0 / 6.0, 3.0 / 5.0, 1.0 / 4.0]);
        assert_eq!(r.score, 0.0);
    }

    #[test]
    fn floor_smoothing_rescues_zero_order() {
        let scheme = MetricScheme::new(MetricTokenizer::None, Smoothing::Floor(0.1)).unwrap();
        let r = sentence_bleu("the cat sat on the mat", "the cat is on the mat", &scheme).unwrap();
        assert_eq!(r.precisions[3], 0.1 / 3.0);
        assert!(r.score > 0.0);
        assert!(r.signature.contains("smooth:floor-0.1"));
        assert!(MetricScheme::new(MetricTokenizer::None, Smoothing::Floor(0.0)).is_err());
    }

    #[test]
    fn identity_scores_100() {
        let lines = ["a b c d e", "x", "猫 が 好き"];
        let r = corpus_bleu(&lines, &lines, &none()).unwrap();
        assert_eq!(r.score, 100.0);
        assert_eq!(r.brevity_penalty, 1.0);
        let r = sentence_bleu("x", "x", &none()).unwrap();
        assert_eq!((r.score, r.effective_order), (100.0, 1));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            corpus_bleu(&["a"], &["a", "b"], &none()),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            corpus_bleu::<&str>(&[], &[], &none()),
            Err(Error::EmptyCorpus)
        ));
        let r = corpus_bleu(&[""], &["a b"], &none()).unwrap();
        assert_eq!((r.score, r.brevity_penalty), (0.0, 0.0));
    }

    #[test]
    fn record_round_trip_and_signature_guard() {
        let r = corpus_bleu(&["a b c d e f"], &["a b c d e g"], &none()).unwrap();
        let back = BleuReport::parse_record(&r.to_record()).unwrap();
        assert!((back.score - r.score).abs() < 1e-12);
        assert_eq!(back.signature, r.signature);
        assert_eq!(score_delta(&r, &back), Some(back.score - r.score));

        let other = MetricScheme::new(MetricTokenizer::Char, Smoothing::None).unwrap();
        let r2 = corpus_bleu(&["a b c d e f"], &["a b c d e g"], &other).unwrap();
        assert_ne!(r.signature, r2.signature);
        assert_eq!(score_delta(&r, &r2), None);
        assert!(BleuReport::parse_record(&r.to_string()).is_ok());
    }
}
