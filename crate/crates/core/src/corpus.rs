//! Parallel corpus data model, line-oriented I/O, concatenation and splitting.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng;

/// Characters that may never appear inside a segment.
pub fn is_line_break(c: char) -> bool {
    matches!(c, '\n' | '\r' | '\u{85}' | '\u{2028}' | '\u{2029}')
}

/// One aligned source/target segment, optionally carrying a quality score.
#[derive(Clone, Debug, PartialEq)]
pub struct SentencePair {
    source: String,
    target: String,
    score: Option<f64>,
}

impl SentencePair {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Result<Self> {
        let source = source.into();
        let target = target.into();
        for seg in [&source, &target] {
            if seg.chars().any(is_line_break) {
                return Err(Error::LineBreakInSegment(seg.clone()));
            }
        }
        Ok(SentencePair {
            source,
            target,
            score: None,
        })
    }

    pub fn scored(source: impl Into<String>, target: impl Into<String>, score: f64) -> Result<Self> {
        Self::new(source, target)?.with_score(Some(score))
    }

    pub fn with_score(mut self, score: Option<f64>) -> Result<Self> {
        if let Some(s) = score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::ScoreOutOfRange(s));
            }
        }
        self.score = score;
        Ok(self)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }
}

/// An ordered collection of sentence pairs for one language direction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub source_lang: String,
    pub target_lang: String,
    pub name: String,
}

impl ParallelCorpus {
    pub fn new(source_lang: impl Into<String>, target_lang: impl Into<String>) -> Self {
        ParallelCorpus {
            pairs: Vec::new(),
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            name: String::new(),
        }
    }

    pub fn from_pairs(pairs: Vec<SentencePair>) -> Self {
        ParallelCorpus {
            pairs,
            ..Default::default()
        }
    }

    pub fn with_langs(mut self, source_lang: &str, target_lang: &str) -> Self {
        self.source_lang = source_lang.to_owned();
        self.target_lang = target_lang.to_owned();
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_owned();
        self
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// A corpus with the same metadata and the given pairs.
    pub fn replace_pairs(&self, pairs: Vec<SentencePair>) -> Self {
        ParallelCorpus {
            pairs,
            source_lang: self.source_lang.clone(),
            target_lang: self.target_lang.clone(),
            name: self.name.clone(),
        }
    }

    pub fn sources(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.source())
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.pairs.iter().map(|p| p.target())
    }
}

/// Reads every line of a UTF-8 file. A trailing CR is stripped from each line,
/// and a final newline does not start an extra empty line.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut reader = BufReader::with_capacity(1 << 20, File::open(path)?);
    let mut lines = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if buf.last() == Some(&b'\n') {
            buf.pop();
            if buf.last() == Some(&b'\r') {
                buf.pop();
            }
        }
        let line = lines.len() + 1;
        let text = String::from_utf8(std::mem::take(&mut buf)).map_err(|_| Error::InvalidUtf8 {
            path: path.to_owned(),
            line,
        })?;
        if text.chars().any(is_line_break) {
            return Err(Error::EmbeddedLineBreak {
                path: path.to_owned(),
                line,
            });
        }
        lines.push(text);
    }
    Ok(lines)
}

fn parse_score(path: &Path, line: usize, raw: &str) -> Result<Option<f64>> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    match trimmed.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(Some(v)),
        _ => Err(Error::InvalidScore {
            path: path.to_owned(),
            line,
            value: raw.to_owned(),
        }),
    }
}

/// Reads a corpus stored as one file per side (plus an optional score file),
/// pairing line `i` of each.
pub fn read_parallel(source_path: &Path, target_path: &Path, score_path: Option<&Path>) -> Result<ParallelCorpus> {
    let sources = read_lines(source_path)?;
    let targets = read_lines(target_path)?;
    if sources.len() != targets.len() {
        return Err(Error::LineCountMismatch(sources.len(), targets.len()));
    }
    let scores = match score_path {
        Some(p) => {
            let raw = read_lines(p)?;
            if raw.len() != sources.len() {
                return Err(Error::LineCountMismatch(sources.len(), raw.len()));
            }
            raw.iter()
                .enumerate()
                .map(|(i, s)| parse_score(p, i + 1, s))
                .collect::<Result<Vec<_>>>()?
        }
        None => vec![None; sources.len()],
    };
    // Line-break checks already ran in read_lines.
    let pairs = sources
        .into_iter()
        .zip(targets)
        .zip(scores)
        .map(|((source, target), score)| SentencePair { source, target, score })
        .collect();
    Ok(ParallelCorpus::from_pairs(pairs))
}

/// Reads a tab-separated corpus: `source<TAB>target[<TAB>score]`.
pub fn read_tsv(path: &Path, has_score: bool) -> Result<ParallelCorpus> {
    let expected = if has_score { 3 } else { 2 };
    let mut pairs = Vec::new();
    for (i, line) in read_lines(path)?.into_iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != expected {
            return Err(Error::FieldCount {
                expected,
                got: fields.len(),
                line: i + 1,
            });
        }
        let score = if has_score {
            parse_score(path, i + 1, fields[2])?
        } else {
            None
        };
        pairs.push(SentencePair {
            source: fields[0].to_owned(),
            target: fields[1].to_owned(),
            score,
        });
    }
    Ok(ParallelCorpus::from_pairs(pairs))
}

fn write_column<'a>(path: &Path, lines: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);
    for line in lines {
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one file per side. Scores are not written.
pub fn write_parallel(corpus: &ParallelCorpus, source_path: &Path, target_path: &Path) -> Result<()> {
    write_parallel_scored(corpus, source_path, target_path, None)
}

/// Like [`write_parallel`], also writing scores (an empty line for a missing score).
pub fn write_parallel_scored(
    corpus: &ParallelCorpus,
    source_path: &Path,
    target_path: &Path,
    score_path: Option<&Path>,
) -> Result<()> {
    write_column(source_path, corpus.sources())?;
    write_column(target_path, corpus.targets())?;
    if let Some(p) = score_path {
        let scores: Vec<String> = corpus
            .pairs
            .iter()
            .map(|pair| pair.score.map(|s| s.to_string()).unwrap_or_default())
            .collect();
        write_column(p, scores.iter().map(String::as_str))?;
    }
    Ok(())
}

pub fn write_tsv(corpus: &ParallelCorpus, path: &Path, with_score: bool) -> Result<()> {
    let mut out = BufWriter::with_capacity(1 << 20, File::create(path)?);
    for pair in &corpus.pairs {
        write!(out, "{}\t{}", pair.source, pair.target)?;
        if with_score {
            out.write_all(b"\t")?;
            if let Some(s) = pair.score {
                write!(out, "{s}")?;
            }
        }
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Concatenates corpora in order. All inputs must carry the same language tags.
pub fn concat_corpora(corpora: &[ParallelCorpus]) -> Result<ParallelCorpus> {
    let Some(first) = corpora.first() else {
        return Ok(ParallelCorpus::default());
    };
    for c in &corpora[1..] {
        for (left, right) in [
            (&first.source_lang, &c.source_lang),
            (&first.target_lang, &c.target_lang),
        ] {
            if left != right {
                return Err(Error::LanguageMismatch {
                    left: left.clone(),
                    right: right.clone(),
                });
            }
        }
    }
    let total = corpora.iter().map(ParallelCorpus::len).sum();
    let mut pairs = Vec::with_capacity(total);
    for c in corpora {
        pairs.extend(c.pairs.iter().cloned());
    }
    let mut out = first.replace_pairs(pairs);
    out.name = corpora.iter().map(|c| c.name.as_str()).collect::<Vec<_>>().join("+");
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub valid_count: usize,
    pub test_count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSplit {
    pub train: ParallelCorpus,
    pub valid: ParallelCorpus,
    pub test: ParallelCorpus,
}

/// Draws `test_count + valid_count` indices with a seeded partial Fisher-Yates
/// shuffle. The first draws go to test, the next to valid (both in draw order);
/// every remaining pair goes to train in its original order.
pub fn split_corpus(corpus: &ParallelCorpus, spec: &SplitSpec) -> Result<CorpusSplit> {
    let n = corpus.len();
    let held_out = spec.valid_count + spec.test_count;
    if held_out > n {
        return Err(Error::SplitTooLarge {
            requested: held_out,
            available: n,
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = rng::seeded(spec.seed);
    for i in 0..held_out {
        let j = i + rng::below(&mut rng, (n - i) as u64) as usize;
        perm.swap(i, j);
    }
    let mut held = vec![false; n];
    for &i in &perm[..held_out] {
        held[i] = true;
    }
    let pick = |idx: &[usize]| corpus.replace_pairs(idx.iter().map(|&i| corpus.pairs[i].clone()).collect());
    let test = pick(&perm[..spec.test_count]);
    let valid = pick(&perm[spec.test_count..held_out]);
    let train = corpus.replace_pairs(
        corpus
            .pairs
            .iter()
            .zip(&held)
            .filter(|(_, &h)| !h)
            .map(|(p, _)| p.clone())
            .collect(),
    );
    Ok(CorpusSplit { train, valid, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn pair(s: &str, t: &str) -> SentencePair {
        SentencePair::new(s, t).unwrap()
    }

    fn corpus_of(n: usize) -> ParallelCorpus {
        ParallelCorpus::from_pairs((0..n).map(|i| pair(&format!("s{i}"), &format!("t{i}"))).collect())
    }

    #[test]
    fn reads_positionally_aligned_files() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        fs::write(&s, "a\nb\n").unwrap();
        fs::write(&t, "x\r\ny").unwrap();
        let c = read_parallel(&s, &t, None).unwrap();
        assert_eq!(c.pairs, vec![pair("a", "x"), pair("b", "y")]);
    }

    #[test]
    fn line_count_mismatch_reports_both_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        fs::write(&s, "a\nb\nc\n").unwrap();
        fs::write(&t, "x\ny\n").unwrap();
        let err = read_parallel(&s, &t, None).unwrap_err();
        assert_eq!(err.to_string(), "line-count mismatch 3 vs 2");
    }

    #[test]
    fn reads_scores() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t, sc) = (dir.path().join("s"), dir.path().join("t"), dir.path().join("sc"));
        fs::write(&s, "a\n").unwrap();
        fs::write(&t, "x\n").unwrap();
        fs::write(&sc, "0.71\n").unwrap();
        let c = read_parallel(&s, &t, Some(&sc)).unwrap();
        assert_eq!(c.pairs[0].score(), Some(0.71));

        fs::write(&sc, "1.5\n").unwrap();
        assert!(matches!(
            read_parallel(&s, &t, Some(&sc)),
            Err(Error::InvalidScore { line: 1, .. })
        ));
        fs::write(&sc, "abc\n").unwrap();
        assert!(matches!(
            read_parallel(&s, &t, Some(&sc)),
            Err(Error::InvalidScore { .. })
        ));
    }

    #[test]
    fn invalid_utf8_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        fs::write(&s, b"ok\n\xff\xfe\n").unwrap();
        fs::write(&t, "x\ny\n").unwrap();
        match read_parallel(&s, &t, None) {
            Err(Error::InvalidUtf8 { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn embedded_carriage_return_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        fs::write(&s, "a\rb\n").unwrap();
        fs::write(&t, "x\n").unwrap();
        assert!(matches!(
            read_parallel(&s, &t, None),
            Err(Error::EmbeddedLineBreak { line: 1, .. })
        ));
        assert!(SentencePair::new("a\u{2028}b", "x").is_err());
    }

    #[test]
    fn tsv_fields() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.tsv");
        fs::write(&p, "a\tx\n").unwrap();
        assert_eq!(read_tsv(&p, false).unwrap().pairs, vec![pair("a", "x")]);
        fs::write(&p, "a\tx\t0.5\n").unwrap();
        assert_eq!(read_tsv(&p, true).unwrap().pairs[0].score(), Some(0.5));
        fs::write(&p, "a\n").unwrap();
        assert_eq!(
            read_tsv(&p, false).unwrap_err().to_string(),
            "expected 2 fields, got 1, line 1"
        );
    }

    #[test]
    fn write_single_pair_and_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let (s, t) = (dir.path().join("s"), dir.path().join("t"));
        write_parallel(&ParallelCorpus::from_pairs(vec![pair("a", "x")]), &s, &t).unwrap();
        assert_eq!(fs::read_to_string(&s).unwrap(), "a\n");
        assert_eq!(fs::read_to_string(&t).unwrap(), "x\n");

        write_parallel(&ParallelCorpus::default(), &s, &t).unwrap();
        assert_eq!(fs::metadata(&s).unwrap().len(), 0);
        assert_eq!(fs::metadata(&t).unwrap().len(), 0);
        assert!(read_parallel(&s, &t, None).unwrap().is_empty());
    }

    #[test]
    fn concat_preserves_order_and_checks_tags() {
        let a = corpus_of(3).with_langs("en", "ja");
        let b = corpus_of(4).with_langs("en", "ja");
        let c = concat_corpora(&[a.clone(), b]).unwrap();
        assert_eq!(c.len(), 7);
        assert_eq!(&c.pairs[..3], &a.pairs[..]);
        assert_eq!(concat_corpora(std::slice::from_ref(&a)).unwrap().pairs, a.pairs);

        let other = corpus_of(1).with_langs("en", "de");
        assert!(matches!(
            concat_corpora(&[a, other]),
            Err(Error::LanguageMismatch { .. })
        ));
    }

    #[test]
    fn split_sizes_and_identity() {
        let c = corpus_of(20_000);
        let s = split_corpus(
            &c,
            &SplitSpec {
                valid_count: 5000,
                test_count: 5000,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (10_000, 5000, 5000));

        let s = split_corpus(
            &c,
            &SplitSpec {
                valid_count: 0,
                test_count: 0,
                seed: 1,
            },
        )
        .unwrap();
        assert_eq!(s.train, c);
    }

    #[test]
    fn split_rejects_oversized_request() {
        let c = corpus_of(10);
        let err = split_corpus(
            &c,
            &SplitSpec {
                valid_count: 6,
                test_count: 5,
                seed: 0,
            },
        )
        .unwrap_err();
        assert!(matches!(
            err,
            Error::SplitTooLarge {
                requested: 11,
                available: 10
            }
        ));
    }

    #[test]
    fn split_train_keeps_original_order() {
        let c = corpus_of(100);
        let s = split_corpus(
            &c,
            &SplitSpec {
                valid_count: 10,
                test_count: 10,
                seed: 5,
            },
        )
        .unwrap();
        let idx: Vec<usize> = s.train.sources().map(|x| x[1..].parse().unwrap()).collect();
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
    }
}
