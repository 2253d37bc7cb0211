use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line-count mismatch {0} vs {1}")]
    LineCountMismatch(usize, usize),

    #[error("{}: invalid UTF-8 on line {line}", path.display())]
    InvalidUtf8 { path: PathBuf, line: usize },

    #[error("{}: line {line} contains a line-break character", path.display())]
    EmbeddedLineBreak { path: PathBuf, line: usize },

    #[error("{}: bad score {value:?} on line {line} (expected a number in [0, 1])", path.display())]
    InvalidScore { path: PathBuf, line: usize, value: String },

    #[error("expected {expected} fields, got {got}, line {line}")]
    FieldCount { expected: usize, got: usize, line: usize },

    #[error("segment contains a line-break character: {0:?}")]
    LineBreakInSegment(String),

    #[error("score {0} is outside [0, 1]")]
    ScoreOutOfRange(f64),

    #[error("language tags differ: {left} vs {right}")]
    LanguageMismatch { left: String, right: String },

    #[error("cannot take {requested} valid+test pairs from a corpus of {available}")]
    SplitTooLarge { requested: usize, available: usize },

    #[error("vocab_size {requested} is below the {required} base pieces")]
    VocabTooSmall { requested: usize, required: usize },

    #[error("unsegmentable input: no piece covers {0:?}")]
    Unsegmentable(char),

    #[error("hypothesis has {hyp} lines but reference has {reference}")]
    LengthMismatch { hyp: usize, reference: usize },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("external tokenizer: {0}")]
    External(String),

    #[error("model file line {line}: {message}")]
    ModelFormat { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
