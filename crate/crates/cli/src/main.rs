use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod report;

/// Exit status for a comparison between reports with different signatures.
pub const EXIT_SIGNATURE_MISMATCH: u8 = 3;

/// A configuration or usage problem detected after argument parsing (exit 2).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(
    name = "mtprep",
    version,
    about = "Parallel-corpus preparation, subword tokenization and BLEU scoring"
)]
struct Cli {
    /// TOML pipeline configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a parallel corpus and print the row ledger.
    Clean(CleanArgs),
    /// Seeded train/valid/test split.
    Split(SplitArgs),
    /// Train a BPE or unigram subword model.
    TrainSubword(TrainArgs),
    /// Segment text into subword pieces.
    Encode(EncodeArgs),
    /// Join subword pieces back into text.
    Decode(DecodeArgs),
    /// Export a model vocabulary.
    Vocab(VocabArgs),
    /// Corpus BLEU of a hypothesis file against a reference file.
    Bleu(BleuArgs),
    /// Compare two saved BLEU reports; refuses when signatures differ.
    BleuDiff(BleuDiffArgs),
    /// Token counts, length histograms and OOV rate.
    Stats(StatsArgs),
    /// Rule-based or external pretokenization.
    Pretokenize(PretokArgs),
    /// Inverse of a rule-based pretokenizer.
    Detokenize(PretokArgs),
    /// Learn a truecasing model.
    TrainTruecaser(TrainTruecaserArgs),
    /// Apply a truecasing model.
    Truecase(TruecaseArgs),
}

#[derive(Args)]
pub struct CleanArgs {
    #[arg(long)]
    pub src: Option<PathBuf>,
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    /// One score per line in [0, 1]; an empty line means unscored.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub out_src: PathBuf,
    #[arg(long)]
    pub out_tgt: PathBuf,
    #[arg(long)]
    pub out_scores: Option<PathBuf>,
    /// Ledger report file [default: <out-src>.ledger].
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub max_length: Option<usize>,
    /// chars or tokens.
    #[arg(long)]
    pub length_unit: Option<String>,
    #[arg(long)]
    pub max_ratio: Option<f64>,
    /// pair, source or target.
    #[arg(long)]
    pub dedup_key: Option<String>,
    /// Keep only pairs scored strictly above this value.
    #[arg(long)]
    pub score_threshold: Option<f64>,
    #[arg(long)]
    pub no_source_copy_check: bool,
}

#[derive(Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub src: Option<PathBuf>,
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Validation rows [default: 5000].
    #[arg(long)]
    pub valid: Option<usize>,
    /// Test rows [default: 5000].
    #[arg(long)]
    pub test: Option<usize>,
    /// Required, here or in the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// File suffix for the source side.
    #[arg(long, default_value = "src")]
    pub src_suffix: String,
    #[arg(long, default_value = "tgt")]
    pub tgt_suffix: String,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training text, one sentence per line; repeatable.
    #[arg(long = "input", short, required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
    /// bpe or unigram [default: unigram].
    #[arg(long)]
    pub model_type: Option<String>,
    /// [default: 32000]
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub character_coverage: Option<f64>,
    #[arg(long)]
    pub byte_fallback: bool,
    #[arg(long)]
    pub split_digits: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub seed_vocab_size: Option<usize>,
    #[arg(long)]
    pub max_piece_length: Option<usize>,
    #[arg(long)]
    pub em_iterations: Option<usize>,
    #[arg(long)]
    pub prune_fraction: Option<f64>,
    /// Pretokenize training lines first (none, whitespace, 13a, char, script, external:<cmd>).
    #[arg(long)]
    pub pretok: Option<String>,
    /// [default: <model>.report]
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// [default: stdin]
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// [default: stdout]
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// BPE merge dropout probability; needs --seed.
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Unigram sampling smoothing; needs --seed.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub pretok: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Detokenize decoded text with this scheme.
    #[arg(long)]
    pub detok: Option<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct VocabArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// tokens or piece-logprob.
    #[arg(long, default_value = "tokens")]
    pub format: String,
    /// Write <unk>, <s> and </s> first.
    #[arg(long)]
    pub include_specials: bool,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct BleuArgs {
    #[arg(long)]
    pub hyp: PathBuf,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// 13a, char, ja-char or none [default: 13a].
    #[arg(long)]
    pub scheme: Option<String>,
    /// Floor smoothing epsilon for zero-match orders.
    #[arg(long)]
    pub smooth: Option<f64>,
    /// Write the full-precision record line here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct BleuDiffArgs {
    pub baseline: PathBuf,
    pub candidate: PathBuf,
}

#[derive(Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    /// Tokenization for counting [default: config pretokenize section, else whitespace].
    #[arg(long)]
    pub pretok: Option<String>,
    /// Vocabulary file (first tab-separated column) for OOV rates.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub bucket_width: usize,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct PretokArgs {
    /// none, whitespace, 13a, char, script or external:<cmd>.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub lowercase: bool,
}

#[derive(Args)]
pub struct TrainTruecaserArgs {
    #[arg(long = "input", short, required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub model: PathBuf,
}

#[derive(Args)]
pub struct TruecaseArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use mtprep::Error as E;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_)
                | E::SplitTooLarge { .. }
                | E::VocabTooSmall { .. }
                | E::LineCountMismatch(..)
                | E::LengthMismatch { .. } => 2,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = config::PipelineConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::Clean(a) => commands::clean(a, &cfg),
        Command::Split(a) => commands::split(a, &cfg),
        Command::TrainSubword(a) => commands::train_subword(a, &cfg),
        Command::Encode(a) => commands::encode(a),
        Command::Decode(a) => commands::decode(a),
        Command::Vocab(a) => commands::vocab(a),
        Command::Bleu(a) => commands::bleu(a, &cfg),
        Command::BleuDiff(a) => commands::bleu_diff(a),
        Command::Stats(a) => commands::stats(a, &cfg),
        Command::Pretokenize(a) => commands::pretokenize(a),
        Command::Detokenize(a) => commands::detokenize(a),
        Command::TrainTruecaser(a) => commands::train_truecaser(a),
        Command::Truecase(a) => commands::truecase(a),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
