//! Unigram language-model segmentation.
//!
//! A word is segmented over a lattice whose nodes are character boundaries
//! and whose edges are pieces. Training starts from a large seed vocabulary,
//! alternates EM re-estimation (forward-backward expected counts, then
//! renormalization) with pruning of the pieces whose removal costs the least
//! likelihood, and stops once the vocabulary fits.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use rand::RngCore;

use super::{
    all_byte_pieces, byte_fallback_pieces, covered_chars, digit_barred, line_words, parse_byte_piece, prepare_words,
    SubwordTrainConfig,
};
use crate::error::{Error, Result};
use crate::rng;

/// Total probability reserved for the 256 byte pieces when byte fallback is on.
pub const BYTE_FALLBACK_MASS: f64 = 1e-6;

/// Relative tolerance under which two path scores count as tied. Sums of the
/// same log-probabilities in different orders can differ in the last bits.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

fn cmp_score(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= SCORE_TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0) {
        Ordering::Equal
    } else {
        a.partial_cmp(&b).unwrap_or(Ordering::Equal)
    }
}

fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Clone, Copy, Debug)]
enum PieceRef {
    Piece(u32),
    Fallback(char),
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    start: usize,
    piece: PieceRef,
    logp: f64,
}

struct Lattice {
    /// `ends[j]` holds the edges that finish at boundary `j`.
    ends: Vec<Vec<Edge>>,
}

/// Piece lookup shared by the model and the trainer.
#[derive(Clone, Debug, Default)]
struct PieceTable {
    pieces: Vec<(String, f64)>,
    /// Non-byte pieces only.
    index: HashMap<String, u32>,
    max_chars: usize,
    /// Ids of `<0x00>`..`<0xFF>` when byte fallback is enabled.
    byte_ids: Option<Vec<u32>>,
}

impl PieceTable {
    fn new(pieces: Vec<(String, f64)>, byte_fallback: bool) -> Self {
        let mut index = HashMap::with_capacity(pieces.len());
        let mut max_chars = 1;
        for (i, (p, _)) in pieces.iter().enumerate() {
            if parse_byte_piece(p).is_none() {
                index.insert(p.clone(), i as u32);
                max_chars = max_chars.max(p.chars().count());
            }
        }
        let byte_ids = byte_fallback.then(|| {
            let ids: HashMap<&str, u32> = pieces
                .iter()
                .enumerate()
                .map(|(i, (p, _))| (p.as_str(), i as u32))
                .collect();
            all_byte_pieces()
                .map(|b| ids.get(b.as_str()).copied().unwrap_or(u32::MAX))
                .collect()
        });
        PieceTable {
            pieces,
            index,
            max_chars,
            byte_ids,
        }
    }

    fn fallback_logp(&self, c: char) -> Option<f64> {
        let ids = self.byte_ids.as_ref()?;
        let mut buf = [0u8; 4];
        Some(
            c.encode_utf8(&mut buf)
                .bytes()
                .map(|b| self.pieces[ids[b as usize] as usize].1)
                .sum(),
        )
    }

    fn lattice(&self, word: &str, exclude: Option<u32>) -> Result<Lattice> {
        let offsets: Vec<usize> = word.char_indices().map(|(i, _)| i).chain([word.len()]).collect();
        let n = offsets.len() - 1;
        let mut ends: Vec<Vec<Edge>> = vec![Vec::new(); n + 1];
        for start in 0..n {
            let mut single = false;
            for len in 1..=self.max_chars.min(n - start) {
                let piece = &word[offsets[start]..offsets[start + len]];
                if let Some(&id) = self.index.get(piece) {
                    if Some(id) == exclude {
                        continue;
                    }
                    single |= len == 1;
                    ends[start + len].push(Edge {
                        start,
                        piece: PieceRef::Piece(id),
                        logp: self.pieces[id as usize].1,
                    });
                }
            }
            if !single {
                let c = word[offsets[start]..].chars().next().expect("in range");
                match self.fallback_logp(c) {
                    Some(logp) => ends[start + 1].push(Edge {
                        start,
                        piece: PieceRef::Fallback(c),
                        logp,
                    }),
                    None => {
                        if !ends.iter().flatten().any(|e| e.start == start) {
                            return Err(Error::Unsegmentable(c));
                        }
                    }
                }
            }
        }
        Ok(Lattice { ends })
    }

    fn push_piece(&self, piece: PieceRef, out: &mut Vec<String>) {
        match piece {
            PieceRef::Piece(id) => out.push(self.pieces[id as usize].0.clone()),
            PieceRef::Fallback(c) => out.extend(byte_fallback_pieces(c)),
        }
    }

    fn path(&self, best: &[Option<(f64, usize, Option<Edge>)>], mut node: usize) -> Vec<PieceRef> {
        let mut refs = Vec::new();
        while let Some((_, _, Some(edge))) = best[node] {
            refs.push(edge.piece);
            node = edge.start;
        }
        refs.reverse();
        refs
    }

    fn render(&self, refs: &[PieceRef]) -> Vec<String> {
        let mut out = Vec::with_capacity(refs.len());
        for &r in refs {
            self.push_piece(r, &mut out);
        }
        out
    }

    /// Highest-scoring segmentation. Ties (within [`SCORE_TIE_TOLERANCE`]) go
    /// to fewer pieces, then to the lexicographically smaller piece sequence.
    fn viterbi(&self, word: &str, exclude: Option<u32>) -> Result<Vec<PieceRef>> {
        let lattice = self.lattice(word, exclude)?;
        let n = lattice.ends.len() - 1;
        let mut best: Vec<Option<(f64, usize, Option<Edge>)>> = vec![None; n + 1];
        best[0] = Some((0.0, 0, None));
        for j in 1..=n {
            for edge in &lattice.ends[j] {
                let Some((score, count, _)) = best[edge.start] else {
                    continue;
                };
                let cand = (score + edge.logp, count + 1);
                let better = match best[j] {
                    None => true,
                    Some((s, c, cur)) => match cmp_score(cand.0, s) {
                        Ordering::Greater => true,
                        Ordering::Less => false,
                        Ordering::Equal => match cand.1.cmp(&c) {
                            Ordering::Less => true,
                            Ordering::Greater => false,
                            Ordering::Equal => {
                                let cur = cur.expect("non-initial node has an edge");
                                let mut a = self.path(&best, edge.start);
                                a.push(edge.piece);
                                let mut b = self.path(&best, cur.start);
                                b.push(cur.piece);
                                self.render(&a) < self.render(&b)
                            }
                        },
                    },
                };
                if better {
                    best[j] = Some((cand.0, cand.1, Some(*edge)));
                }
            }
        }
        if best[n].is_none() {
            let c = word.chars().next().unwrap_or('\u{FFFD}');
            return Err(Error::Unsegmentable(c));
        }
        Ok(self.path(&best, n))
    }

    /// Forward log-scores `alpha[j]` with every edge score multiplied by `scale`.
    fn forward(&self, lattice: &Lattice, scale: f64) -> Vec<f64> {
        let n = lattice.ends.len() - 1;
        let mut alpha = vec![f64::NEG_INFINITY; n + 1];
        alpha[0] = 0.0;
        for j in 1..=n {
            for e in &lattice.ends[j] {
                alpha[j] = log_sum_exp(alpha[j], alpha[e.start] + scale * e.logp);
            }
        }
        alpha
    }

    fn sample(&self, word: &str, alpha: f64, rng: &mut impl RngCore) -> Result<Vec<PieceRef>> {
        let lattice = self.lattice(word, None)?;
        let fwd = self.forward(&lattice, alpha);
        let n = lattice.ends.len() - 1;
        if fwd[n] == f64::NEG_INFINITY {
            return Err(Error::Unsegmentable(word.chars().next().unwrap_or('\u{FFFD}')));
        }
        let mut refs = Vec::new();
        let mut node = n;
        while node > 0 {
            let edges = &lattice.ends[node];
            let u = rng::unit(rng);
            let mut acc = 0.0;
            let mut chosen = None;
            for e in edges {
                let p = (fwd[e.start] + alpha * e.logp - fwd[node]).exp();
                if p > 0.0 {
                    chosen = Some(*e);
                }
                acc += p;
                if u < acc {
                    break;
                }
            }
            // Rounding can leave `acc` a hair below 1; fall back to the last live edge.
            let e = chosen.expect("reachable node has a live incoming edge");
            refs.push(e.piece);
            node = e.start;
        }
        refs.reverse();
        Ok(refs)
    }

    /// Adds expected piece counts for one word (weighted by `weight`) and
    /// returns its log marginal likelihood.
    fn expected_counts(&self, word: &str, weight: f64, counts: &mut [f64]) -> Result<f64> {
        let lattice = self.lattice(word, None)?;
        let n = lattice.ends.len() - 1;
        let alpha = self.forward(&lattice, 1.0);
        let mut beta = vec![f64::NEG_INFINITY; n + 1];
        beta[n] = 0.0;
        for j in (1..=n).rev() {
            for e in &lattice.ends[j] {
                beta[e.start] = log_sum_exp(beta[e.start], e.logp + beta[j]);
            }
        }
        let z = alpha[n];
        for (j, ends) in lattice.ends.iter().enumerate().skip(1) {
            for e in ends {
                if let PieceRef::Piece(id) = e.piece {
                    counts[id as usize] += weight * (alpha[e.start] + e.logp + beta[j] - z).exp();
                }
            }
        }
        Ok(z)
    }

    fn log_likelihood(&self, word: &str) -> Result<f64> {
        let lattice = self.lattice(word, None)?;
        Ok(*self.forward(&lattice, 1.0).last().expect("n+1 nodes"))
    }
}

/// Trained unigram model: pieces with natural-log probabilities.
#[derive(Clone, Debug)]
pub struct UnigramModel {
    marker: char,
    byte_fallback: bool,
    split_digits: bool,
    table: PieceTable,
}

impl PartialEq for UnigramModel {
    fn eq(&self, other: &Self) -> bool {
        self.marker == other.marker
            && self.byte_fallback == other.byte_fallback
            && self.split_digits == other.split_digits
            && self.table.pieces == other.table.pieces
    }
}

impl UnigramModel {
    /// Builds a model from `(piece, log-probability)` pairs. Probabilities must
    /// sum to 1 within 1e-6; with byte fallback all 256 byte pieces must be present.
    pub fn from_pieces(
        pieces: Vec<(String, f64)>,
        marker: char,
        byte_fallback: bool,
        split_digits: bool,
    ) -> Result<Self> {
        let bad = |message: String| Error::ModelFormat { line: 0, message };
        let mut seen = HashSet::new();
        for (p, logp) in &pieces {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(bad(format!("invalid piece {p:?}")));
            }
            if !seen.insert(p.as_str()) {
                return Err(bad(format!("duplicate piece {p:?}")));
            }
            if logp.is_nan() || *logp > 0.0 {
                return Err(bad(format!("piece {p:?} has log-probability {logp}")));
            }
        }
        let mass: f64 = pieces.iter().map(|(_, l)| l.exp()).sum();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(bad(format!("piece probabilities sum to {mass}, not 1")));
        }
        if byte_fallback {
            if let Some(b) = all_byte_pieces().find(|b| !seen.contains(b.as_str())) {
                return Err(bad(format!("byte fallback enabled but {b} is missing")));
            }
        }
        Ok(UnigramModel {
            marker,
            byte_fallback,
            split_digits,
            table: PieceTable::new(pieces, byte_fallback),
        })
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn byte_fallback(&self) -> bool {
        self.byte_fallback
    }

    pub fn split_digits(&self) -> bool {
        self.split_digits
    }

    pub fn pieces(&self) -> &[(String, f64)] {
        &self.table.pieces
    }

    pub fn len(&self) -> usize {
        self.table.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.pieces.is_empty()
    }

    pub fn log_prob(&self, piece: &str) -> Option<f64> {
        self.table.pieces.iter().find(|(p, _)| p == piece).map(|(_, l)| *l)
    }

    /// Best segmentation of a single word, taken as-is (no marker added).
    pub fn viterbi_word(&self, word: &str) -> Result<Vec<String>> {
        let refs = self.table.viterbi(word, None)?;
        Ok(self.table.render(&refs))
    }

    /// One draw from the segmentation distribution of a single word, with
    /// piece scores raised to the power `alpha`.
    pub fn sample_word(&self, word: &str, alpha: f64, rng: &mut impl RngCore) -> Result<Vec<String>> {
        let refs = self.table.sample(word, alpha, rng)?;
        Ok(self.table.render(&refs))
    }

    /// Log marginal likelihood of a word (sum over all segmentations).
    pub fn word_log_likelihood(&self, word: &str) -> Result<f64> {
        self.table.log_likelihood(word)
    }

    pub fn encode(&self, text: &str) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for w in line_words(text, self.marker) {
            out.extend(self.viterbi_word(&w)?);
        }
        Ok(out)
    }

    pub fn sample(&self, text: &str, alpha: f64, rng: &mut impl RngCore) -> Result<Vec<String>> {
        if alpha.is_nan() || alpha <= 0.0 {
            return Err(Error::Config(format!("sampling alpha must be positive, got {alpha}")));
        }
        let mut out = Vec::new();
        for w in line_words(text, self.marker) {
            out.extend(self.sample_word(&w, alpha, rng)?);
        }
        Ok(out)
    }
}

/// EM trainer state, exposed so callers can observe individual iterations.
#[derive(Clone, Debug)]
pub struct UnigramTrainer {
    config: SubwordTrainConfig,
    /// Training words split at uncovered characters, with counts.
    segments: Vec<(String, u64)>,
    /// Non-byte pieces; probabilities sum to `1 - byte mass`.
    pieces: Vec<(String, f64)>,
}

impl UnigramTrainer {
    pub fn new<S: AsRef<str>>(lines: &[S], config: &SubwordTrainConfig) -> Result<Self> {
        config.validate()?;
        let table = prepare_words(lines, config.marker, config.split_digits);
        if table.words.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let base = covered_chars(&table, config.character_coverage);
        let required = base.len() + if config.byte_fallback { 256 } else { 0 };
        if config.vocab_size < required {
            return Err(Error::VocabTooSmall {
                requested: config.vocab_size,
                required,
            });
        }
        let covered: HashSet<char> = base.iter().map(|&(c, _)| c).collect();

        let mut segs: BTreeMap<String, u64> = BTreeMap::new();
        for (w, &n) in &table.words {
            for seg in w.split(|c: char| !covered.contains(&c)).filter(|s| !s.is_empty()) {
                *segs.entry(seg.to_owned()).or_default() += n;
            }
        }
        let segments: Vec<(String, u64)> = segs.into_iter().collect();

        // Seed pieces: frequent substrings, scored by frequency × length.
        let max_len = config.unigram.max_piece_length;
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for (seg, n) in &segments {
            let offs: Vec<usize> = seg.char_indices().map(|(i, _)| i).chain([seg.len()]).collect();
            let chars = offs.len() - 1;
            for i in 0..chars {
                for len in 2..=max_len.min(chars - i) {
                    let sub = &seg[offs[i]..offs[i + len]];
                    if digit_barred(sub, config.split_digits) || parse_byte_piece(sub).is_some() {
                        continue;
                    }
                    *freq.entry(sub).or_default() += n;
                }
            }
        }
        let mut seeds: Vec<(&str, u64)> = freq.into_iter().collect();
        seeds.sort_by(|a, b| {
            let sa = a.1 * a.0.chars().count() as u64;
            let sb = b.1 * b.0.chars().count() as u64;
            sb.cmp(&sa).then(a.0.cmp(b.0))
        });
        seeds.truncate(config.seed_vocab_size());

        let mut char_freq: HashMap<char, u64> = HashMap::new();
        for (seg, n) in &segments {
            for c in seg.chars() {
                *char_freq.entry(c).or_default() += n;
            }
        }
        let mut initial: Vec<(String, f64)> = base
            .iter()
            .map(|&(c, _)| (c.to_string(), char_freq.get(&c).copied().unwrap_or(0).max(1) as f64))
            .collect();
        initial.extend(seeds.into_iter().map(|(s, f)| (s.to_owned(), f as f64)));

        let mut trainer = UnigramTrainer {
            config: config.clone(),
            segments,
            pieces: Vec::new(),
        };
        trainer.set_from_counts(initial);
        Ok(trainer)
    }

    fn byte_mass(&self) -> f64 {
        if self.config.byte_fallback {
            BYTE_FALLBACK_MASS
        } else {
            0.0
        }
    }

    /// Normalizes raw counts into log-probabilities. Zero-count pieces are
    /// dropped, except single characters which keep the smallest positive weight.
    fn set_from_counts(&mut self, counts: Vec<(String, f64)>) {
        let kept: Vec<(String, f64)> = counts
            .into_iter()
            .filter_map(|(p, c)| {
                if c > 0.0 {
                    Some((p, c))
                } else if p.chars().count() == 1 {
                    Some((p, f64::MIN_POSITIVE))
                } else {
                    None
                }
            })
            .collect();
        let total: f64 = kept.iter().map(|(_, c)| c).sum();
        let offset = (1.0 - self.byte_mass()).ln() - total.ln();
        self.pieces = kept.into_iter().map(|(p, c)| (p, c.ln() + offset)).collect();
    }

    fn table(&self) -> PieceTable {
        PieceTable::new(self.pieces.clone(), false)
    }

    /// Training words (split at uncovered characters) with their counts.
    pub fn segments(&self) -> &[(String, u64)] {
        &self.segments
    }

    /// Current vocabulary size including byte pieces.
    pub fn vocab_len(&self) -> usize {
        self.pieces.len() + if self.config.byte_fallback { 256 } else { 0 }
    }

    /// Total log marginal likelihood of the training words under the current pieces.
    pub fn log_likelihood(&self) -> f64 {
        let table = self.table();
        self.segments
            .iter()
            .map(|(w, n)| *n as f64 * table.log_likelihood(w).expect("training words are segmentable"))
            .sum()
    }

    /// One EM iteration. Returns the log-likelihood under the parameters
    /// before the update.
    pub fn em_step(&mut self) -> f64 {
        let table = self.table();
        let mut counts = vec![0.0; self.pieces.len()];
        let mut ll = 0.0;
        for (w, n) in &self.segments {
            ll += table
                .expected_counts(w, *n as f64, &mut counts)
                .expect("training words are segmentable");
        }
        let raw = self
            .pieces
            .iter()
            .zip(counts)
            .map(|((p, _), c)| (p.clone(), c))
            .collect();
        self.set_from_counts(raw);
        ll
    }

    /// Removes the multi-character pieces whose removal loses the least
    /// likelihood: a `prune_fraction` share of them, never going below the
    /// target size.
    pub fn prune(&mut self) {
        let table = self.table();
        let excess = self.vocab_len().saturating_sub(self.config.vocab_size);
        if excess == 0 {
            return;
        }
        let mut freq = vec![0.0f64; self.pieces.len()];
        for (w, n) in &self.segments {
            for r in table.viterbi(w, None).expect("training words are segmentable") {
                if let PieceRef::Piece(id) = r {
                    freq[id as usize] += *n as f64;
                }
            }
        }
        let vsum: f64 = freq.iter().sum();
        let mut losses: Vec<(f64, usize)> = Vec::new();
        for (id, (piece, _)) in self.pieces.iter().enumerate() {
            if piece.chars().count() < 2 {
                continue;
            }
            let f = freq[id];
            if f == 0.0 {
                losses.push((0.0, id));
                continue;
            }
            let alt = table.viterbi(piece, Some(id as u32)).expect("single characters remain");
            let logprob_sp = f.ln() - vsum.ln();
            let logsum_alt = (vsum + f * (alt.len() as f64 - 1.0)).ln();
            let logprob_alt: f64 = alt
                .iter()
                .map(|r| match r {
                    PieceRef::Piece(a) => (freq[*a as usize] + f).ln() - logsum_alt,
                    PieceRef::Fallback(_) => f.ln() - logsum_alt,
                })
                .sum();
            losses.push((f / vsum * (logprob_sp - logprob_alt), id));
        }
        losses.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.pieces[a.1].0.cmp(&self.pieces[b.1].0))
        });
        let share = ((losses.len() as f64) * self.config.unigram.prune_fraction).floor() as usize;
        let k = share.max(1).min(excess).min(losses.len());
        let drop: HashSet<usize> = losses[..k].iter().map(|&(_, id)| id).collect();
        let kept: Vec<(String, f64)> = self
            .pieces
            .iter()
            .enumerate()
            .filter(|(id, _)| !drop.contains(id))
            .map(|(_, (p, l))| (p.clone(), l.exp()))
            .collect();
        self.set_from_counts(kept);
    }

    /// Snapshot of the current state as a model (byte pieces appended when enabled).
    pub fn model(&self) -> UnigramModel {
        let mut pieces = self.pieces.clone();
        pieces.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        if self.config.byte_fallback {
            let logp = (BYTE_FALLBACK_MASS / 256.0).ln();
            pieces.extend(all_byte_pieces().map(|b| (b, logp)));
        }
        UnigramModel {
            marker: self.config.marker,
            byte_fallback: self.config.byte_fallback,
            split_digits: self.config.split_digits,
            table: PieceTable::new(pieces, self.config.byte_fallback),
        }
    }

    pub fn train(mut self) -> UnigramModel {
        loop {
            for _ in 0..self.config.unigram.em_iterations {
                self.em_step();
            }
            if self.vocab_len() <= self.config.vocab_size {
                break;
            }
            self.prune();
        }
        self.model()
    }
}

pub fn train_unigram<S: AsRef<str>>(lines: &[S], config: &SubwordTrainConfig) -> Result<UnigramModel> {
    Ok(UnigramTrainer::new(lines, config)?.train())
}
