use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use mtprep::cleaning::{self, FilterConfig};
use mtprep::corpus::{self, SplitSpec};
use mtprep::evaluation::{self, BleuReport, MetricScheme, MetricTokenizer, Smoothing};
use mtprep::pretokenize::{self, PretokenizerKind, TruecaseModel};
use mtprep::rng;
use mtprep::subword::{self, Regularization, SubwordModel, SubwordTrainConfig, VocabFormat, Vocabulary};

use crate::config::PipelineConfig;
use crate::report::Report;
use crate::{BleuArgs, BleuDiffArgs, CleanArgs, DecodeArgs, EncodeArgs, PretokArgs, SplitArgs, StatsArgs};
use crate::{TrainArgs, TrainTruecaserArgs, TruecaseArgs, UsageError, VocabArgs, EXIT_SIGNATURE_MISMATCH};

const DEFAULT_HELD_OUT: usize = 5000;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse<T: std::str::FromStr<Err = mtprep::Error>>(s: &str) -> Result<T> {
    Ok(s.parse()?)
}

fn required(flag: Option<PathBuf>, config: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| usage(format!("--{name} is required (or paths.{name} in the config)")))
}

fn read_input(path: Option<&Path>) -> Result<Vec<String>> {
    match path {
        Some(p) => corpus::read_lines(p).with_context(|| format!("reading {}", p.display())),
        None => {
            let mut text = String::new();
            io::stdin().read_to_string(&mut text).context("reading stdin")?;
            Ok(text.lines().map(str::to_owned).collect())
        }
    }
}

fn write_output<I, S>(path: Option<&Path>, lines: I) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut out = BufWriter::new(sink);
    for line in lines {
        out.write_all(line.as_ref().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn clean(a: CleanArgs, cfg: &PipelineConfig) -> Result<u8> {
    let f = &cfg.filter;
    let defaults = FilterConfig::default();
    let config = FilterConfig {
        max_length: a.max_length.or(f.max_length).unwrap_or(defaults.max_length),
        length_unit: match a.length_unit.as_deref().or(f.length_unit.as_deref()) {
            Some(s) => parse(s)?,
            None => defaults.length_unit,
        },
        max_ratio: a.max_ratio.or(f.max_ratio).unwrap_or(defaults.max_ratio),
        dedup_key: match a.dedup_key.as_deref().or(f.dedup_key.as_deref()) {
            Some(s) => parse(s)?,
            None => defaults.dedup_key,
        },
        score_threshold: a.score_threshold.or(f.score_threshold),
        source_copy_check: !a.no_source_copy_check && f.source_copy_check.unwrap_or(defaults.source_copy_check),
    };
    config.validate()?;

    let src = required(a.src, &cfg.paths.src, "src")?;
    let tgt = required(a.tgt, &cfg.paths.tgt, "tgt")?;
    let scores = a.scores.or_else(|| cfg.paths.scores.clone());
    let input = corpus::read_parallel(&src, &tgt, scores.as_deref())?;
    let (kept, ledger) = cleaning::run_pipeline(input, &config);

    corpus::write_parallel_scored(&kept, &a.out_src, &a.out_tgt, a.out_scores.as_deref())?;
    let report = a.report.unwrap_or_else(|| with_suffix(&a.out_src, ".ledger"));
    fs::write(&report, ledger.to_report()).with_context(|| format!("writing {}", report.display()))?;
    print!("{ledger}");
    Ok(0)
}

pub fn split(a: SplitArgs, cfg: &PipelineConfig) -> Result<u8> {
    let s = &cfg.split;
    let seed = a
        .seed
        .or(s.seed)
        .ok_or_else(|| usage("split needs an explicit --seed (or split.seed in the config)"))?;
    let spec = SplitSpec {
        valid_count: a.valid.or(s.valid).unwrap_or(DEFAULT_HELD_OUT),
        test_count: a.test.or(s.test).unwrap_or(DEFAULT_HELD_OUT),
        seed,
    };
    let src = required(a.src, &cfg.paths.src, "src")?;
    let tgt = required(a.tgt, &cfg.paths.tgt, "tgt")?;
    let out_dir = required(a.out_dir, &cfg.paths.out_dir, "out_dir")?;
    if a.src_suffix.is_empty() || a.tgt_suffix.is_empty() || a.src_suffix == a.tgt_suffix {
        return Err(usage("--src-suffix and --tgt-suffix must be nonempty and distinct"));
    }

    let input = corpus::read_parallel(&src, &tgt, None)?;
    let parts = corpus::split_corpus(&input, &spec)?;
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut report = Report::new("split");
    report
        .add("rng", rng::RNG_ALGORITHM)
        .add("seed", seed)
        .add("input_rows", input.len());
    for (name, part) in [("train", &parts.train), ("valid", &parts.valid), ("test", &parts.test)] {
        let s = out_dir.join(format!("{name}.{}", a.src_suffix));
        let t = out_dir.join(format!("{name}.{}", a.tgt_suffix));
        corpus::write_parallel(part, &s, &t)?;
        report.add(&format!("{name}_rows"), part.len());
        println!("{name}\t{}", part.len());
    }
    report.write(&out_dir.join("split.meta"))?;
    Ok(0)
}

fn pretokenized(lines: Vec<String>, kind: Option<&str>) -> Result<Vec<String>> {
    match kind {
        None => Ok(lines),
        Some(k) => {
            let kind: PretokenizerKind = parse(k)?;
            Ok(pretokenize::pretokenize_lines(&lines, &kind)?
                .into_iter()
                .map(|t| t.join(" "))
                .collect())
        }
    }
}

pub fn train_subword(a: TrainArgs, cfg: &PipelineConfig) -> Result<u8> {
    let s = &cfg.subword;
    let mut config = SubwordTrainConfig::default();
    if let Some(t) = a.model_type.as_deref().or(s.model_type.as_deref()) {
        config.model_type = parse(t)?;
    }
    config.vocab_size = a.vocab_size.or(s.vocab_size).unwrap_or(config.vocab_size);
    config.character_coverage = a
        .character_coverage
        .or(s.character_coverage)
        .unwrap_or(config.character_coverage);
    config.byte_fallback = a.byte_fallback || s.byte_fallback.unwrap_or(false);
    config.split_digits = a.split_digits || s.split_digits.unwrap_or(false);
    config.seed = a.seed.or(s.seed).unwrap_or(0);
    let u = &mut config.unigram;
    u.seed_vocab_size = a.seed_vocab_size.or(s.seed_vocab_size);
    u.max_piece_length = a.max_piece_length.or(s.max_piece_length).unwrap_or(u.max_piece_length);
    u.em_iterations = a.em_iterations.or(s.em_iterations).unwrap_or(u.em_iterations);
    u.prune_fraction = a.prune_fraction.or(s.prune_fraction).unwrap_or(u.prune_fraction);
    config.validate()?;

    let mut lines = Vec::new();
    for p in &a.inputs {
        lines.extend(read_input(Some(p))?);
    }
    let lines = pretokenized(lines, a.pretok.as_deref())?;
    let model = subword::train(&lines, &config)?;
    model
        .save(&a.model)
        .with_context(|| format!("writing {}", a.model.display()))?;

    let mut report = Report::new("train-subword");
    report
        .add("model_type", config.model_type)
        .add("vocab_size", config.vocab_size)
        .add("character_coverage", config.character_coverage)
        .add("byte_fallback", config.byte_fallback)
        .add("split_digits", config.split_digits)
        .add("seed", config.seed)
        .add("training_lines", lines.len())
        .add("pieces", model.pieces().len());
    report.write(&a.report.unwrap_or_else(|| with_suffix(&a.model, ".report")))?;
    println!(
        "{} model with {} pieces written to {}",
        config.model_type,
        model.pieces().len(),
        a.model.display()
    );
    Ok(0)
}

fn load_model(path: &Path) -> Result<SubwordModel> {
    SubwordModel::load(path).with_context(|| format!("loading model {}", path.display()))
}

pub fn encode(a: EncodeArgs) -> Result<u8> {
    let reg = match (a.dropout, a.alpha) {
        (Some(_), Some(_)) => return Err(usage("--dropout and --alpha are mutually exclusive")),
        (Some(p), None) if !(0.0..=1.0).contains(&p) => return Err(usage(format!("--dropout {p} is outside [0, 1]"))),
        (None, Some(x)) if x.is_nan() || x <= 0.0 => return Err(usage(format!("--alpha must be positive, got {x}"))),
        (Some(p), None) => Regularization::Dropout(p),
        (None, Some(x)) => Regularization::Sample(x),
        (None, None) => Regularization::None,
    };
    if reg != Regularization::None && a.seed.is_none() {
        return Err(usage("--dropout and --alpha need an explicit --seed"));
    }
    let model = load_model(&a.model)?;
    let lines = pretokenized(read_input(a.input.as_deref())?, a.pretok.as_deref())?;
    let mut r = rng::seeded(a.seed.unwrap_or(0));
    let mut out = Vec::with_capacity(lines.len());
    let mut pieces = 0usize;
    for line in &lines {
        let p = model.encode_with(line, reg, &mut r)?;
        pieces += p.len();
        out.push(p.join(" "));
    }
    write_output(a.output.as_deref(), &out)?;
    if let Some(path) = a.report {
        let mut report = Report::new("encode");
        report.add("lines", lines.len()).add("pieces", pieces);
        match reg {
            Regularization::Dropout(p) => report.add("dropout", p),
            Regularization::Sample(x) => report.add("alpha", x),
            Regularization::None => report.add("regularization", "none"),
        };
        if let Some(seed) = a.seed {
            report.add("seed", seed);
        }
        report.write(&path)?;
    }
    Ok(0)
}

pub fn decode(a: DecodeArgs) -> Result<u8> {
    let model = load_model(&a.model)?;
    let detok: Option<PretokenizerKind> = a.detok.as_deref().map(parse).transpose()?;
    let lines = read_input(a.input.as_deref())?;
    let out: Vec<String> = lines
        .iter()
        .map(|line| {
            let pieces: Vec<&str> = line.split_whitespace().collect();
            let text = model.decode(&pieces);
            match &detok {
                Some(kind) => {
                    pretokenize::detokenize(&text.split(' ').filter(|t| !t.is_empty()).collect::<Vec<_>>(), kind)
                }
                None => text,
            }
        })
        .collect();
    write_output(a.output.as_deref(), &out)?;
    if let Some(path) = a.report {
        Report::new("decode")
            .add("lines", out.len())
            .add("detok", a.detok.as_deref().unwrap_or("none"))
            .write(&path)?;
    }
    Ok(0)
}

pub fn vocab(a: VocabArgs) -> Result<u8> {
    let format: VocabFormat = parse(&a.format)?;
    let model = load_model(&a.model)?;
    subword::export_vocab(&model, &a.output, format, a.include_specials)
        .with_context(|| format!("writing {}", a.output.display()))?;
    let entries = model.pieces().len() + if a.include_specials { subword::SPECIALS.len() } else { 0 };
    println!("{entries} entries written to {}", a.output.display());
    if let Some(path) = a.report {
        Report::new("vocab")
            .add("format", &a.format)
            .add("include_specials", a.include_specials)
            .add("entries", entries)
            .write(&path)?;
    }
    Ok(0)
}

pub fn bleu(a: BleuArgs, cfg: &PipelineConfig) -> Result<u8> {
    let tokenizer: MetricTokenizer = parse(a.scheme.as_deref().or(cfg.metric.scheme.as_deref()).unwrap_or("13a"))?;
    let smoothing = match a.smooth.or(cfg.metric.smooth) {
        Some(eps) => Smoothing::Floor(eps),
        None => Smoothing::None,
    };
    let scheme = MetricScheme::new(tokenizer, smoothing)?;
    let hyps = read_input(Some(&a.hyp))?;
    let refs = read_input(Some(&a.reference))?;
    let report = evaluation::corpus_bleu(&hyps, &refs, &scheme)?;
    println!("{report}");
    if let Some(path) = a.report {
        fs::write(&path, format!("{}\n", report.to_record())).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(0)
}

fn read_record(path: &Path) -> Result<BleuReport> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let line = text
        .lines()
        .find(|l| l.starts_with("BLEU = "))
        .ok_or_else(|| usage(format!("{}: no BLEU record found", path.display())))?;
    Ok(BleuReport::parse_record(line)?)
}

pub fn bleu_diff(a: BleuDiffArgs) -> Result<u8> {
    let base = read_record(&a.baseline)?;
    let cand = read_record(&a.candidate)?;
    match evaluation::score_delta(&base, &cand) {
        Some(delta) => {
            println!("{:.1} -> {:.1} (delta {delta:+.2})", base.score, cand.score);
            Ok(0)
        }
        None => {
            eprintln!("warning: signatures differ, scores are not comparable");
            eprintln!("  {}: {}", a.baseline.display(), base.signature);
            eprintln!("  {}: {}", a.candidate.display(), cand.signature);
            Ok(EXIT_SIGNATURE_MISMATCH)
        }
    }
}

struct SideStats {
    lines: usize,
    tokens: usize,
    unique: usize,
    histogram: BTreeMap<usize, usize>,
    oov_rate: Option<f64>,
}

fn side_stats(lines: &[String], bucket_width: usize, vocab: Option<&Vocabulary>) -> SideStats {
    let mut unique = HashSet::new();
    let mut histogram = BTreeMap::new();
    let mut tokens = 0;
    for line in lines {
        let mut n = 0;
        for tok in line.split_whitespace() {
            unique.insert(tok);
            n += 1;
        }
        tokens += n;
        *histogram.entry(n / bucket_width).or_insert(0) += 1;
    }
    SideStats {
        lines: lines.len(),
        tokens,
        unique: unique.len(),
        histogram,
        oov_rate: vocab.map(|v| subword::oov_rate(lines, v)),
    }
}

pub fn stats(a: StatsArgs, cfg: &PipelineConfig) -> Result<u8> {
    if a.bucket_width == 0 {
        return Err(usage("--bucket-width must be positive"));
    }
    let vocab = a.vocab.as_deref().map(Vocabulary::load).transpose()?;
    let mut report = Report::new("stats");
    let sides = [
        ("src", Some(a.src), cfg.pretokenize.source.as_deref()),
        ("tgt", a.tgt, cfg.pretokenize.target.as_deref()),
    ];
    for (side, path, default_kind) in sides {
        let Some(path) = path else { continue };
        let kind = a.pretok.as_deref().or(default_kind).unwrap_or("whitespace");
        let lines = pretokenized(read_input(Some(&path))?, Some(kind))?;
        let st = side_stats(&lines, a.bucket_width, vocab.as_ref());
        println!("[{side}] {}", path.display());
        println!("  lines          {}", st.lines);
        println!("  tokens         {}", st.tokens);
        println!("  unique tokens  {}", st.unique);
        report
            .add(&format!("{side}.lines"), st.lines)
            .add(&format!("{side}.tokens"), st.tokens)
            .add(&format!("{side}.unique_tokens"), st.unique);
        if let Some(rate) = st.oov_rate {
            println!("  oov rate       {rate:.6}");
            report.add(&format!("{side}.oov_rate"), rate);
        }
        println!("  length histogram (tokens per line):");
        for (bucket, count) in &st.histogram {
            let (lo, hi) = (bucket * a.bucket_width, (bucket + 1) * a.bucket_width - 1);
            println!("    {lo:>5}-{hi:<5} {count}");
            report.add(&format!("{side}.hist.{lo}-{hi}"), count);
        }
    }
    if let Some(path) = a.report {
        report.write(&path)?;
    }
    Ok(0)
}

pub fn pretokenize(a: PretokArgs) -> Result<u8> {
    let mut lines = read_input(a.input.as_deref())?;
    if a.lowercase {
        lines = lines.iter().map(|l| pretokenize::lowercase(l)).collect();
    }
    write_output(a.output.as_deref(), pretokenized(lines, Some(&a.kind))?)?;
    Ok(0)
}

pub fn detokenize(a: PretokArgs) -> Result<u8> {
    let kind: PretokenizerKind = parse(&a.kind)?;
    if matches!(kind, PretokenizerKind::External(_)) {
        return Err(usage("external tokenizers have no built-in detokenizer"));
    }
    let lines = read_input(a.input.as_deref())?;
    let out = lines.iter().map(|l| {
        let text = pretokenize::detokenize(&l.split_whitespace().collect::<Vec<_>>(), &kind);
        if a.lowercase {
            pretokenize::lowercase(&text)
        } else {
            text
        }
    });
    write_output(a.output.as_deref(), out)?;
    Ok(0)
}

pub fn train_truecaser(a: TrainTruecaserArgs) -> Result<u8> {
    let mut lines = Vec::new();
    for p in &a.inputs {
        lines.extend(read_input(Some(p))?);
    }
    let model = pretokenize::train_truecaser(&lines);
    fs::write(&a.model, model.to_tsv()).with_context(|| format!("writing {}", a.model.display()))?;
    println!("{} forms written to {}", model.forms.len(), a.model.display());
    Ok(0)
}

pub fn truecase(a: TruecaseArgs) -> Result<u8> {
    let text = fs::read_to_string(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let model = TruecaseModel::from_tsv(&text)?;
    let lines = read_input(a.input.as_deref())?;
    write_output(
        a.output.as_deref(),
        lines.iter().map(|l| pretokenize::truecase(l, &model)),
    )?;
    Ok(0)
}
