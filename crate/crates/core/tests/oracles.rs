//! Implementation vs. brute-force reference comparisons.

use std::collections::HashMap;

use mtprep::evaluation::{corpus_bleu, metric_tokenize, MetricScheme, MetricTokenizer, Smoothing};
use mtprep::rng;
use mtprep::subword::{self, ModelType, SubwordTrainConfig, UnigramModel, UnigramTrainer, DEFAULT_MARKER};
use mtprep_oracles as oracle;

fn random_word(r: &mut rng::SeededRng, alphabet: &[char], max_len: u64) -> String {
    let len = 1 + rng::below(r, max_len);
    (0..len)
        .map(|_| alphabet[rng::below(r, alphabet.len() as u64) as usize])
        .collect()
}

fn random_model(r: &mut rng::SeededRng) -> UnigramModel {
    let alphabet = ['a', 'b', 'c'];
    let mut pieces: Vec<String> = alphabet.iter().map(|c| c.to_string()).collect();
    for _ in 0..rng::below(r, 12) {
        let w = random_word(r, &alphabet, 4);
        if !pieces.contains(&w) {
            pieces.push(w);
        }
    }
    let weights: Vec<f64> = pieces.iter().map(|_| 0.05 + rng::unit(r)).collect();
    let total: f64 = weights.iter().sum();
    let table = pieces
        .into_iter()
        .zip(weights)
        .map(|(p, w)| (p, (w / total).ln()))
        .collect();
    UnigramModel::from_pieces(table, DEFAULT_MARKER, false, false).unwrap()
}

fn as_map(m: &UnigramModel) -> HashMap<String, f64> {
    m.pieces().iter().cloned().collect()
}

#[test]
fn viterbi_equals_exhaustive_argmax() {
    let mut r = rng::seeded(2024);
    for _ in 0..500 {
        let m = random_model(&mut r);
        let word = random_word(&mut r, &['a', 'b', 'c'], 12);
        let expected = oracle::best_segmentation(&as_map(&m), &word).unwrap();
        assert_eq!(m.viterbi_word(&word).unwrap(), expected, "{word}");
    }
}

#[test]
fn viterbi_ties_follow_piece_count_then_order() {
    // Equal-probability pieces make many segmentations tie on score.
    let pieces: Vec<(String, f64)> = ["a", "b", "ab", "ba", "aba", "bab"]
        .iter()
        .map(|p| (p.to_string(), (1.0f64 / 6.0).ln()))
        .collect();
    let m = UnigramModel::from_pieces(pieces, DEFAULT_MARKER, false, false).unwrap();
    for word in ["abab", "babab", "ababab", "abba"] {
        assert_eq!(
            m.viterbi_word(word).unwrap(),
            oracle::best_segmentation(&as_map(&m), word).unwrap()
        );
    }
}

#[test]
fn bpe_merges_equal_recounting_oracle() {
    let mut r = rng::seeded(7);
    let alphabet: Vec<char> = "abcdefgh".chars().collect();
    for case in 0..50 {
        let k = 2 + rng::below(&mut r, 7) as usize;
        let letters = &alphabet[..k];
        let words: Vec<String> = (0..1 + rng::below(&mut r, 30))
            .map(|_| random_word(&mut r, letters, 6))
            .collect();
        let line = words.join(" ");
        let vocab_size = k + 1 + rng::below(&mut r, 20) as usize;
        let cfg = SubwordTrainConfig {
            model_type: ModelType::Bpe,
            vocab_size,
            ..Default::default()
        };
        let model = subword::train_bpe(&[line.as_str()], &cfg).unwrap();
        let expected = oracle::bpe_merges(&[line.as_str()], DEFAULT_MARKER, vocab_size);
        assert_eq!(model.merges, expected, "case {case}: {line:?}");
    }
}

#[test]
fn em_monotone_under_exhaustive_likelihood() {
    let mut r = rng::seeded(99);
    for _ in 0..20 {
        let words: Vec<String> = (0..1 + rng::below(&mut r, 8))
            .map(|_| random_word(&mut r, &['a', 'b', 'c'], 9))
            .collect();
        let line = words.join(" ");
        let cfg = SubwordTrainConfig {
            vocab_size: 10,
            ..Default::default()
        };
        let mut trainer = UnigramTrainer::new(&[line.as_str()], &cfg).unwrap();
        let likelihood = |t: &UnigramTrainer| {
            let model = t.model();
            let pieces = as_map(&model);
            t.segments()
                .iter()
                .map(|(w, n)| *n as f64 * oracle::marginal_log_likelihood(&pieces, w))
                .sum::<f64>()
        };
        let mut prev = likelihood(&trainer);
        for _ in 0..6 {
            trainer.em_step();
            let ll = likelihood(&trainer);
            assert!(ll >= prev - 1e-9, "{line}: {ll} < {prev}");
            prev = ll;
        }
    }
}

#[test]
fn bleu_equals_brute_force() {
    let mut r = rng::seeded(5);
    let scheme = MetricScheme::new(MetricTokenizer::None, Smoothing::None).unwrap();
    let vocab = ["the", "a", "cat", "dog", "sat", "on", "mat"];
    let sentence = |r: &mut rng::SeededRng| -> String {
        let n = rng::below(r, 21);
        (0..n)
            .map(|_| vocab[rng::below(r, vocab.len() as u64) as usize])
            .collect::<Vec<_>>()
            .join(" ")
    };
    for _ in 0..200 {
        let lines = 1 + rng::below(&mut r, 50) as usize;
        let hyps: Vec<String> = (0..lines).map(|_| sentence(&mut r)).collect();
        let refs: Vec<String> = (0..lines).map(|_| sentence(&mut r)).collect();
        let got = corpus_bleu(&hyps, &refs, &scheme).unwrap().score;
        let tok = |v: &[String]| -> Vec<Vec<String>> {
            v.iter().map(|l| metric_tokenize(l, MetricTokenizer::None)).collect()
        };
        let want = oracle::corpus_bleu(&tok(&hyps), &tok(&refs));
        assert!(
            (got - want).abs() <= 1e-9 * want.abs().max(f64::MIN_POSITIVE),
            "{got} vs {want}"
        );
    }
}

#[test]
fn sampling_frequency_matches_lattice() {
    let pieces: Vec<(String, f64)> = [("a", 0.4f64), ("b", 0.3), ("ab", 0.3)]
        .iter()
        .map(|&(p, x)| (p.into(), x.ln()))
        .collect();
    let m = UnigramModel::from_pieces(pieces, DEFAULT_MARKER, false, false).unwrap();
    let exact = oracle::segmentation_distribution(&as_map(&m), "ab", 1.0)
        .into_iter()
        .find(|(s, _)| s.len() == 1)
        .unwrap()
        .1;
    let mut r = rng::seeded(123);
    let draws = 10_000;
    let hits = (0..draws)
        .filter(|_| m.sample_word("ab", 1.0, &mut r).unwrap().len() == 1)
        .count();
    let freq = hits as f64 / draws as f64;
    let se = (exact * (1.0 - exact) / draws as f64).sqrt();
    assert!((freq - exact).abs() <= 3.0 * se, "{freq} vs {exact}");
}
