use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::RngCore;

use super::{
    all_byte_pieces, byte_fallback_pieces, covered_chars, digit_barred, line_words, parse_byte_piece, prepare_words,
    SubwordTrainConfig,
};
use crate::error::{Error, Result};
use crate::rng;

/// Byte-pair encoding model: base pieces plus an ordered merge list.
#[derive(Clone, Debug)]
pub struct BpeModel {
    pub marker: char,
    pub byte_fallback: bool,
    pub split_digits: bool,
    /// Pieces with their training frequencies: base characters, then byte
    /// pieces (when enabled), then merged pieces in creation order.
    pub vocab: Vec<(String, u64)>,
    /// Merges in learning order; rank 0 first.
    pub merges: Vec<(String, String)>,
    ids: HashMap<String, u32>,
    id_text: Vec<String>,
    ranks: HashMap<(u32, u32), (u32, u32)>,
}

impl PartialEq for BpeModel {
    fn eq(&self, other: &Self) -> bool {
        self.marker == other.marker
            && self.byte_fallback == other.byte_fallback
            && self.split_digits == other.split_digits
            && self.vocab == other.vocab
            && self.merges == other.merges
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Sym {
    Piece(u32),
    Raw(char),
}

impl BpeModel {
    /// Builds a model, checking that every merge only uses pieces that exist
    /// before it (base pieces or earlier merge results).
    pub fn new(
        marker: char,
        byte_fallback: bool,
        split_digits: bool,
        vocab: Vec<(String, u64)>,
        merges: Vec<(String, String)>,
    ) -> Result<Self> {
        let mut ids: HashMap<String, u32> = HashMap::new();
        let mut id_text = Vec::new();
        let mut intern = |s: &str, ids: &mut HashMap<String, u32>| -> u32 {
            *ids.entry(s.to_owned()).or_insert_with(|| {
                id_text.push(s.to_owned());
                (id_text.len() - 1) as u32
            })
        };
        let merged: HashSet<String> = merges.iter().map(|(l, r)| format!("{l}{r}")).collect();
        let vocab_set: HashSet<&str> = vocab.iter().map(|(p, _)| p.as_str()).collect();
        for (p, _) in &vocab {
            if p.chars().count() == 1 || parse_byte_piece(p).is_some() || !merged.contains(p) {
                intern(p, &mut ids);
            }
        }
        if byte_fallback {
            for b in all_byte_pieces() {
                if !vocab_set.contains(b.as_str()) {
                    return Err(Error::ModelFormat {
                        line: 0,
                        message: format!("byte fallback enabled but {b} is missing"),
                    });
                }
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, (l, r)) in merges.iter().enumerate() {
            let (Some(&li), Some(&ri)) = (ids.get(l), ids.get(r)) else {
                return Err(Error::ModelFormat {
                    line: 0,
                    message: format!("merge {rank} ({l} {r}) uses a piece that does not exist yet"),
                });
            };
            let new = intern(&format!("{l}{r}"), &mut ids);
            ranks.entry((li, ri)).or_insert((rank as u32, new));
        }
        Ok(BpeModel {
            marker,
            byte_fallback,
            split_digits,
            vocab,
            merges,
            ids,
            id_text,
            ranks,
        })
    }

    fn initial_symbols(&self, word: &str) -> Vec<Sym> {
        let mut syms = Vec::with_capacity(word.len());
        let mut buf = [0u8; 4];
        for c in word.chars() {
            match self.ids.get(c.encode_utf8(&mut buf) as &str) {
                Some(&id) => syms.push(Sym::Piece(id)),
                None if self.byte_fallback => {
                    for b in byte_fallback_pieces(c) {
                        syms.push(Sym::Piece(self.ids[&b]));
                    }
                }
                None => syms.push(Sym::Raw(c)),
            }
        }
        syms
    }

    fn merge_of(&self, a: Sym, b: Sym) -> Option<(u32, u32)> {
        match (a, b) {
            (Sym::Piece(x), Sym::Piece(y)) => self.ranks.get(&(x, y)).copied(),
            _ => None,
        }
    }

    fn apply_merges(&self, word: &str, dropout: f64, rng: &mut impl RngCore) -> Vec<Sym> {
        let mut syms = self.initial_symbols(word);
        loop {
            // Lowest-rank surviving candidate, leftmost on ties.
            let mut best: Option<(u32, usize, u32)> = None;
            for i in 0..syms.len().saturating_sub(1) {
                let Some((rank, new)) = self.merge_of(syms[i], syms[i + 1]) else {
                    continue;
                };
                if dropout > 0.0 && rng::unit(rng) < dropout {
                    continue;
                }
                if best.is_none_or(|(r, _, _)| rank < r) {
                    best = Some((rank, i, new));
                }
            }
            let Some((_, i, new)) = best else { break };
            syms[i] = Sym::Piece(new);
            syms.remove(i + 1);
        }
        syms
    }

    fn render(&self, syms: Vec<Sym>, out: &mut Vec<String>) {
        out.extend(syms.into_iter().map(|s| match s {
            Sym::Piece(id) => self.id_text[id as usize].clone(),
            Sym::Raw(c) => c.to_string(),
        }));
    }

    /// Deterministic BPE segmentation.
    pub fn encode(&self, text: &str) -> Vec<String> {
        // With zero dropout the generator is never consulted.
        self.encode_with_dropout(text, 0.0, &mut rng::seeded(0))
    }

    /// Segmentation where each candidate merge is skipped with probability `dropout`
    /// at every step. `dropout = 1` yields the base symbols.
    pub fn encode_with_dropout(&self, text: &str, dropout: f64, rng: &mut impl RngCore) -> Vec<String> {
        let mut out = Vec::new();
        for word in line_words(text, self.marker) {
            let syms = self.apply_merges(&word, dropout, rng);
            self.render(syms, &mut out);
        }
        out
    }
}

#[derive(Debug, PartialEq, Eq)]
struct Candidate {
    count: u64,
    left: String,
    right: String,
    pair: (u32, u32),
}

impl Ord for Candidate {
    // Max-heap: higher count first, then the lexicographically smaller pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| (&other.left, &other.right).cmp(&(&self.left, &self.right)))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const BARRIER: u32 = u32::MAX;

fn word_pairs(word: &[u32], mergeable: &[bool], out: &mut HashMap<(u32, u32), u64>, weight: u64) {
    for w in word.windows(2) {
        if w[0] != BARRIER && w[1] != BARRIER && mergeable[w[0] as usize] && mergeable[w[1] as usize] {
            *out.entry((w[0], w[1])).or_default() += weight;
        }
    }
}

fn merge_word(word: &[u32], pair: (u32, u32), new: u32) -> Vec<u32> {
    let mut out = Vec::with_capacity(word.len());
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && (word[i], word[i + 1]) == pair {
            out.push(new);
            i += 2;
        } else {
            out.push(word[i]);
            i += 1;
        }
    }
    out
}

/// Learns merges greedily: the most frequent adjacent pair is merged each
/// step, ties going to the smallest `(left, right)` by code point, until the
/// vocabulary reaches `vocab_size` or no pair occurs at least twice.
pub fn train_bpe<S: AsRef<str>>(lines: &[S], config: &SubwordTrainConfig) -> Result<BpeModel> {
    config.validate()?;
    let table = prepare_words(lines, config.marker, config.split_digits);
    let base = covered_chars(&table, config.character_coverage);
    let required = base.len() + if config.byte_fallback { 256 } else { 0 };
    if config.vocab_size < required {
        return Err(Error::VocabTooSmall {
            requested: config.vocab_size,
            required,
        });
    }

    let mut vocab: Vec<(String, u64)> = base.iter().map(|&(c, n)| (c.to_string(), n)).collect();
    if config.byte_fallback {
        vocab.extend(all_byte_pieces().map(|b| (b, 0)));
    }
    let mut text: Vec<String> = base.iter().map(|&(c, _)| c.to_string()).collect();
    let mut mergeable: Vec<bool> = text.iter().map(|p| !digit_barred(p, config.split_digits)).collect();
    let mut ids: HashMap<String, u32> = text.iter().enumerate().map(|(i, p)| (p.clone(), i as u32)).collect();

    let mut words: Vec<(Vec<u32>, u64)> = table
        .words
        .iter()
        .map(|(w, &n)| {
            let syms = w
                .chars()
                .map(|c| ids.get(&c.to_string()).copied().unwrap_or(BARRIER))
                .collect();
            (syms, n)
        })
        .collect();

    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    let mut where_: HashMap<(u32, u32), HashSet<usize>> = HashMap::new();
    for (wi, (w, n)) in words.iter().enumerate() {
        let mut local = HashMap::new();
        word_pairs(w, &mergeable, &mut local, *n);
        for (p, c) in local {
            *counts.entry(p).or_default() += c;
            where_.entry(p).or_default().insert(wi);
        }
    }
    let candidate = |pair: (u32, u32), count: u64, text: &[String]| Candidate {
        count,
        left: text[pair.0 as usize].clone(),
        right: text[pair.1 as usize].clone(),
        pair,
    };
    let mut heap: BinaryHeap<Candidate> = counts.iter().map(|(&p, &c)| candidate(p, c, &text)).collect();

    let mut merges = Vec::new();
    while vocab.len() < config.vocab_size {
        let Some(top) = heap.pop() else { break };
        if counts.get(&top.pair).copied().unwrap_or(0) != top.count {
            continue;
        }
        if top.count < 2 {
            break;
        }
        let merged = format!("{}{}", top.left, top.right);
        if parse_byte_piece(&merged).is_some() {
            // Would be indistinguishable from a byte piece when decoding.
            counts.remove(&top.pair);
            continue;
        }
        let new = match ids.get(&merged) {
            Some(&id) => id,
            None => {
                let id = text.len() as u32;
                ids.insert(merged.clone(), id);
                mergeable.push(true);
                text.push(merged.clone());
                vocab.push((merged, top.count));
                id
            }
        };
        merges.push((top.left, top.right));

        let mut touched: Vec<usize> = where_.remove(&top.pair).unwrap_or_default().into_iter().collect();
        touched.sort_unstable();
        let mut delta: HashMap<(u32, u32), i64> = HashMap::new();
        for wi in touched {
            let (w, n) = &words[wi];
            if !w.windows(2).any(|p| (p[0], p[1]) == top.pair) {
                continue;
            }
            let merged_word = merge_word(w, top.pair, new);
            let (mut before, mut after) = (HashMap::new(), HashMap::new());
            word_pairs(w, &mergeable, &mut before, *n);
            word_pairs(&merged_word, &mergeable, &mut after, *n);
            for (p, c) in before {
                *delta.entry(p).or_default() -= c as i64;
            }
            for (p, c) in after {
                *delta.entry(p).or_default() += c as i64;
                where_.entry(p).or_default().insert(wi);
            }
            words[wi].0 = merged_word;
        }
        let mut changed: Vec<((u32, u32), i64)> = delta.into_iter().filter(|&(_, d)| d != 0).collect();
        changed.sort_unstable();
        for (p, d) in changed {
            let c = counts.entry(p).or_default();
            *c = (*c as i64 + d) as u64;
            let c = *c;
            if c == 0 {
                counts.remove(&p);
            } else {
                heap.push(candidate(p, c, &text));
            }
        }
    }

    BpeModel::new(config.marker, config.byte_fallback, config.split_digits, vocab, merges)
}
