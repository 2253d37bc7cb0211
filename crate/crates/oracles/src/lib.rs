//! Slow, obviously-correct reference implementations.
//!
//! Nothing here shares code with `mtprep-core`: inputs and outputs are plain
//! strings, maps and vectors, and every algorithm recomputes from scratch.

use std::collections::{BTreeMap, HashMap, HashSet};

/// BPE merge learning that recounts every adjacent pair after each merge.
/// Ties go to the smallest `(left, right)` by code point. Every character is a
/// base piece; training stops at `vocab_size` pieces or when no pair occurs twice.
pub fn bpe_merges(lines: &[&str], marker: char, vocab_size: usize) -> Vec<(String, String)> {
    let mut words: BTreeMap<Vec<String>, u64> = BTreeMap::new();
    for line in lines {
        for w in line.split_whitespace() {
            let mut syms = vec![marker.to_string()];
            syms.extend(w.chars().map(|c| c.to_string()));
            *words.entry(syms).or_insert(0) += 1;
        }
    }
    let mut vocab: HashSet<String> = words.keys().flatten().cloned().collect();
    if !vocab.contains(&marker.to_string()) {
        vocab.insert(marker.to_string());
    }
    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (w, n) in &words {
            for i in 0..w.len().saturating_sub(1) {
                *counts.entry((w[i].clone(), w[i + 1].clone())).or_insert(0) += n;
            }
        }
        // BTreeMap iterates pairs in ascending order, so the first maximum wins ties.
        let mut best: Option<(&(String, String), u64)> = None;
        for (pair, &c) in &counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((pair, c));
            }
        }
        let Some((pair, count)) = best else { break };
        if count < 2 {
            break;
        }
        let pair = pair.clone();
        let joined = format!("{}{}", pair.0, pair.1);
        let mut next = BTreeMap::new();
        for (w, n) in words {
            let mut out = Vec::new();
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == pair.0 && w[i + 1] == pair.1 {
                    out.push(joined.clone());
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *next.entry(out).or_insert(0) += n;
        }
        words = next;
        vocab.insert(joined);
        merges.push(pair);
    }
    merges
}

/// Every way to cut `word` into non-empty pieces, as piece lists.
pub fn all_segmentations(word: &str) -> Vec<Vec<String>> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return vec![Vec::new()];
    }
    let cuts = chars.len() - 1;
    let mut out = Vec::with_capacity(1 << cuts);
    for mask in 0u64..(1u64 << cuts) {
        let mut seg = Vec::new();
        let mut cur = String::new();
        for (i, &c) in chars.iter().enumerate() {
            cur.push(c);
            if i == cuts || mask & (1 << i) != 0 {
                seg.push(std::mem::take(&mut cur));
            }
        }
        out.push(seg);
    }
    out
}

/// Left-to-right sum of piece log-probabilities, or `None` if a piece is missing.
pub fn segmentation_score(pieces: &HashMap<String, f64>, seg: &[String]) -> Option<f64> {
    let mut s = 0.0;
    for p in seg {
        s += pieces.get(p)?;
    }
    Some(s)
}

/// Scores within this relative distance are ties.
pub const TIE: f64 = 1e-12;

fn tied(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE * a.abs().max(b.abs()).max(1.0)
}

/// Exhaustive argmax: highest score, then fewest pieces, then lexicographically
/// smallest piece sequence.
pub fn best_segmentation(pieces: &HashMap<String, f64>, word: &str) -> Option<Vec<String>> {
    let mut best: Option<(f64, Vec<String>)> = None;
    for seg in all_segmentations(word) {
        let Some(score) = segmentation_score(pieces, &seg) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((bs, bseg)) => {
                if tied(score, *bs) {
                    seg.len() < bseg.len() || (seg.len() == bseg.len() && seg < *bseg)
                } else {
                    score > *bs
                }
            }
        };
        if better {
            best = Some((score, seg));
        }
    }
    best.map(|(_, s)| s)
}

/// Exact distribution over segmentations with scores scaled by `alpha`.
pub fn segmentation_distribution(pieces: &HashMap<String, f64>, word: &str, alpha: f64) -> Vec<(Vec<String>, f64)> {
    let scored: Vec<(Vec<String>, f64)> = all_segmentations(word)
        .into_iter()
        .filter_map(|seg| segmentation_score(pieces, &seg).map(|s| (seg, (alpha * s).exp())))
        .collect();
    let z: f64 = scored.iter().map(|(_, w)| w).sum();
    scored.into_iter().map(|(s, w)| (s, w / z)).collect()
}

/// Log of the summed probability of every segmentation of `word`.
pub fn marginal_log_likelihood(pieces: &HashMap<String, f64>, word: &str) -> f64 {
    all_segmentations(word)
        .iter()
        .filter_map(|seg| segmentation_score(pieces, seg))
        .map(f64::exp)
        .sum::<f64>()
        .ln()
}

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i + n <= tokens.len() {
        out.push(tokens[i..i + n].to_vec());
        i += 1;
    }
    out
}

fn count_of(grams: &[Vec<String>], g: &[String]) -> u64 {
    grams.iter().filter(|x| x.as_slice() == g).count() as u64
}

/// Unsmoothed corpus BLEU from raw token lists, counting n-grams by linear
/// scan. Orders for which the hypothesis corpus has no n-grams are left out of
/// the geometric mean.
pub fn corpus_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
    let mut matches = [0u64; 4];
    let mut totals = [0u64; 4];
    let (mut c, mut r) = (0u64, 0u64);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len() as u64;
        r += rf.len() as u64;
        for n in 1..=4 {
            let hg = ngrams(h, n);
            let rg = ngrams(rf, n);
            totals[n - 1] += hg.len() as u64;
            let mut seen: Vec<&Vec<String>> = Vec::new();
            for g in &hg {
                if seen.contains(&g) {
                    continue;
                }
                seen.push(g);
                matches[n - 1] += count_of(&hg, g).min(count_of(&rg, g));
            }
        }
    }
    if c == 0 {
        return 0.0;
    }
    let order = totals.iter().take_while(|&&t| t > 0).count();
    let mut log_sum = 0.0;
    for n in 0..order {
        if matches[n] == 0 {
            return 0.0;
        }
        log_sum += (matches[n] as f64 / totals[n] as f64).ln();
    }
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * (log_sum / order as f64).exp()
}
