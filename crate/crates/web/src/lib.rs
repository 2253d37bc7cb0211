//! Browser bindings: train a small subword model and segment text (with
//! dropout or sampling), score BLEU under a chosen metric tokenizer, and run
//! the cleaning cascade on pasted tab-separated pairs.

use mtprep::cleaning::{self, FilterConfig};
use mtprep::corpus::{ParallelCorpus, SentencePair};
use mtprep::evaluation::{self, MetricScheme, Smoothing};
use mtprep::rng;
use mtprep::subword::{self, ModelType, Regularization, SubwordModel, SubwordTrainConfig};
use wasm_bindgen::prelude::*;

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Segmenter {
    model: SubwordModel,
}

impl Segmenter {
    pub fn train(
        training_text: &str,
        model_type: &str,
        vocab_size: usize,
        byte_fallback: bool,
    ) -> Result<Self, String> {
        let model_type: ModelType = model_type.parse().map_err(|e: mtprep::Error| e.to_string())?;
        let lines: Vec<&str> = training_text.lines().collect();
        let cfg = SubwordTrainConfig {
            model_type,
            vocab_size,
            byte_fallback,
            ..Default::default()
        };
        let model = subword::train(&lines, &cfg).map_err(|e| e.to_string())?;
        Ok(Segmenter { model })
    }

    /// `amount` is the dropout probability for BPE or the sampling alpha for
    /// unigram; 0 means deterministic segmentation.
    pub fn segment_with(&self, text: &str, amount: f64, seed: u64) -> Result<String, String> {
        let reg = match self.model.model_type() {
            _ if amount == 0.0 => Regularization::None,
            ModelType::Bpe => Regularization::Dropout(amount),
            ModelType::Unigram => Regularization::Sample(amount),
        };
        let mut r = rng::seeded(seed);
        let pieces = self.model.encode_with(text, reg, &mut r).map_err(|e| e.to_string())?;
        Ok(pieces.join(" "))
    }
}

#[wasm_bindgen]
impl Segmenter {
    #[wasm_bindgen(constructor)]
    pub fn new(
        training_text: &str,
        model_type: &str,
        vocab_size: usize,
        byte_fallback: bool,
    ) -> Result<Segmenter, JsError> {
        Self::train(training_text, model_type, vocab_size, byte_fallback).map_err(js)
    }

    pub fn segment(&self, text: &str, amount: f64, seed: u64) -> Result<String, JsError> {
        self.segment_with(text, amount, seed).map_err(js)
    }

    pub fn decode(&self, pieces: &str) -> String {
        self.model.decode(&pieces.split_whitespace().collect::<Vec<_>>())
    }

    #[wasm_bindgen(js_name = pieceCount)]
    pub fn piece_count(&self) -> usize {
        self.model.pieces().len()
    }
}

pub fn bleu_report(hyp: &str, reference: &str, scheme: &str, smooth: f64) -> Result<String, String> {
    let tokenizer = scheme.parse().map_err(|e: mtprep::Error| e.to_string())?;
    let smoothing = if smooth > 0.0 {
        Smoothing::Floor(smooth)
    } else {
        Smoothing::None
    };
    let scheme = MetricScheme::new(tokenizer, smoothing).map_err(|e| e.to_string())?;
    let hyps: Vec<&str> = hyp.lines().collect();
    let refs: Vec<&str> = reference.lines().collect();
    evaluation::corpus_bleu(&hyps, &refs, &scheme)
        .map(|r| r.to_string())
        .map_err(|e| e.to_string())
}

/// Corpus BLEU in display form; `smooth` <= 0 disables smoothing.
#[wasm_bindgen]
pub fn bleu(hyp: &str, reference: &str, scheme: &str, smooth: f64) -> Result<String, JsError> {
    bleu_report(hyp, reference, scheme, smooth).map_err(js)
}

pub fn clean_tsv(tsv: &str, max_length: usize, score_threshold: f64) -> Result<String, String> {
    let mut pairs = Vec::new();
    for (i, line) in tsv.lines().enumerate() {
        let mut fields = line.split('\t');
        let (Some(s), Some(t)) = (fields.next(), fields.next()) else {
            return Err(format!("line {}: expected source<TAB>target[<TAB>score]", i + 1));
        };
        let score = match fields.next() {
            Some(x) if !x.trim().is_empty() => Some(
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("line {}: bad score", i + 1))?,
            ),
            _ => None,
        };
        pairs.push(
            SentencePair::new(s, t)
                .and_then(|p| p.with_score(score))
                .map_err(|e| e.to_string())?,
        );
    }
    let config = FilterConfig {
        max_length,
        score_threshold: (score_threshold > 0.0).then_some(score_threshold),
        ..Default::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let (kept, ledger) = cleaning::run_pipeline(ParallelCorpus::from_pairs(pairs), &config);
    let mut out = ledger.to_string();
    out.push('\n');
    for p in &kept.pairs {
        out.push_str(&format!("{}\t{}\n", p.source(), p.target()));
    }
    Ok(out)
}

/// Row ledger followed by the surviving pairs.
#[wasm_bindgen]
pub fn clean(tsv: &str, max_length: usize, score_threshold: f64) -> Result<String, JsError> {
    clean_tsv(tsv, max_length, score_threshold).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segmenter_round_trips() {
        let seg = Segmenter::train("low lower lowest\nnew newer newest", "bpe", 40, false).unwrap();
        let pieces = seg.segment_with("lower newest", 0.0, 0).unwrap();
        assert_eq!(seg.decode(&pieces), "lower newest");
        let dropped = seg.segment_with("lower newest", 1.0, 3).unwrap();
        assert_eq!(dropped.split(' ').count(), 13);
        assert!(Segmenter::train("abc", "bpe", 1, false).is_err());
    }

    #[test]
    fn bleu_and_clean() {
        assert!(bleu_report("a b c d", "a b c d", "none", 0.0)
            .unwrap()
            .starts_with("BLEU = 100.0"));
        assert!(bleu_report("a", "a\nb", "13a", 0.0).is_err());
        let out = clean_tsv(
            "a b\tx y\t0.9\na b\tx y\t0.9\nsame\tsame\t0.9\nlow\tscore\t0.1\n",
            200,
            0.5,
        )
        .unwrap();
        assert!(out.starts_with("Dataframe shape (rows, columns): (4, 2)\n"));
        assert!(out.ends_with("\na b\tx y\n"));
    }
}
