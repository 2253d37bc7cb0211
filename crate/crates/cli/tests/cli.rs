use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn mtprep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtprep")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = mtprep(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    mtprep(args).status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Work(TempDir);

impl Work {
    fn new() -> Self {
        Work(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }
}

fn clean_fixture(w: &Work, extra: &[&str]) -> String {
    let (en, ja, sc) = (fixture("corpus.en"), fixture("corpus.ja"), fixture("corpus.scores"));
    let (oe, oj) = (w.path("clean.en"), w.path("clean.ja"));
    let mut args = vec![
        "clean",
        "--src",
        p(&en),
        "--tgt",
        p(&ja),
        "--scores",
        p(&sc),
        "--out-src",
        p(&oe),
        "--out-tgt",
        p(&oj),
    ];
    args.extend_from_slice(extra);
    ok(&args)
}

#[test]
fn clean_prints_ledger_and_writes_report() {
    let w = Work::new();
    let stdout = clean_fixture(&w, &[]);
    assert_eq!(
        stdout,
        "Dataframe shape (rows, columns): (10, 2)\n\
         --- Rows with Empty Cells Deleted      --> Rows: 9\n\
         --- Duplicates Deleted                 --> Rows: 8\n\
         --- Source-Copied Rows Deleted         --> Rows: 7\n\
         --- Too-Long Source/Target Deleted     --> Rows: 7\n\
         --- Rows with Empty Cells Deleted      --> Rows: 7\n"
    );
    let report = fs::read_to_string(w.path("clean.en.ledger")).unwrap();
    assert!(report.starts_with("# filter-ledger v1\ninitial\t10\n"));
    assert_eq!(fs::read_to_string(w.path("clean.en")).unwrap().lines().count(), 7);
}

#[test]
fn clean_score_threshold_drops_low_scores() {
    let w = Work::new();
    let sc_out = w.path("clean.scores");
    let stdout = clean_fixture(&w, &["--score-threshold", "0.7", "--out-scores", p(&sc_out)]);
    assert!(stdout.contains("--- Low-Score Rows Deleted"));
    let scores = fs::read_to_string(&sc_out).unwrap();
    for s in scores.lines().filter(|s| !s.is_empty()) {
        assert!(s.parse::<f64>().unwrap() > 0.7, "{s}");
    }
    assert!(!fs::read_to_string(w.path("clean.en")).unwrap().contains("Low quality"));
}

#[test]
fn clean_is_idempotent_through_the_cli() {
    let w = Work::new();
    clean_fixture(&w, &[]);
    let (e1, j1, e2, j2) = (
        w.path("clean.en"),
        w.path("clean.ja"),
        w.path("again.en"),
        w.path("again.ja"),
    );
    let second = ok(&[
        "clean",
        "--src",
        p(&e1),
        "--tgt",
        p(&j1),
        "--out-src",
        p(&e2),
        "--out-tgt",
        p(&j2),
    ]);
    assert!(second.lines().skip(1).all(|l| l.ends_with("Rows: 7")), "{second}");
    assert_eq!(fs::read(&e1).unwrap(), fs::read(&e2).unwrap());
}

#[test]
fn clean_config_errors_exit_2_and_io_errors_exit_1() {
    let w = Work::new();
    let o = p(&w.path("o")).to_owned();
    let en = fixture("corpus.en");
    let ja = fixture("corpus.ja");
    assert_eq!(
        code(&[
            "clean",
            "--src",
            p(&en),
            "--tgt",
            p(&ja),
            "--out-src",
            &o,
            "--out-tgt",
            &o,
            "--max-ratio",
            "0.5"
        ]),
        2
    );
    assert_eq!(
        code(&[
            "clean",
            "--src",
            "/nonexistent/x",
            "--tgt",
            p(&ja),
            "--out-src",
            &o,
            "--out-tgt",
            &o
        ]),
        1
    );
    let short = w.write("short.ja", "one\n");
    assert_eq!(
        code(&[
            "clean",
            "--src",
            p(&en),
            "--tgt",
            p(&short),
            "--out-src",
            &o,
            "--out-tgt",
            &o
        ]),
        2
    );
}

#[test]
fn split_is_deterministic_and_requires_seed() {
    let w = Work::new();
    let src: String = (0..50).map(|i| format!("s{i}\n")).collect();
    let tgt: String = (0..50).map(|i| format!("t{i}\n")).collect();
    let (s, t) = (w.write("c.s", &src), w.write("c.t", &tgt));
    let (d1, d2) = (w.path("a"), w.path("b"));
    let run = |d: &Path| {
        ok(&[
            "split",
            "--src",
            p(&s),
            "--tgt",
            p(&t),
            "--out-dir",
            p(d),
            "--valid",
            "5",
            "--test",
            "7",
            "--seed",
            "42",
        ])
    };
    assert_eq!(run(&d1), "train\t38\nvalid\t5\ntest\t7\n");
    run(&d2);
    for f in ["train.src", "valid.src", "test.src", "train.tgt", "split.meta"] {
        assert_eq!(fs::read(d1.join(f)).unwrap(), fs::read(d2.join(f)).unwrap(), "{f}");
    }
    let meta = fs::read_to_string(d1.join("split.meta")).unwrap();
    assert!(meta.starts_with("# mtprep-report v1\ncommand\tsplit\n"));
    assert!(meta.contains("seed\t42\n"));

    assert_eq!(
        code(&[
            "split",
            "--src",
            p(&s),
            "--tgt",
            p(&t),
            "--out-dir",
            p(&d1),
            "--valid",
            "5",
            "--test",
            "5"
        ]),
        2
    );
    // The 5000/5000 defaults do not fit 50 lines.
    assert_eq!(
        code(&[
            "split",
            "--src",
            p(&s),
            "--tgt",
            p(&t),
            "--out-dir",
            p(&d1),
            "--seed",
            "1"
        ]),
        2
    );
}

#[test]
fn split_seed_can_come_from_config() {
    let w = Work::new();
    let s = w.write("c.s", "a\nb\nc\nd\n");
    let t = w.write("c.t", "1\n2\n3\n4\n");
    let cfg = w.write(
        "p.toml",
        &format!(
            "[paths]\nsrc = {:?}\ntgt = {:?}\nout_dir = {:?}\n[split]\nvalid = 1\ntest = 1\nseed = 3\n",
            p(&s),
            p(&t),
            p(&w.path("out"))
        ),
    );
    assert_eq!(ok(&["--config", p(&cfg), "split"]), "train\t2\nvalid\t1\ntest\t1\n");
    let bad = w.write("bad.toml", "[split]\nseeed = 3\n");
    assert_eq!(code(&["--config", p(&bad), "split"]), 2);
}

fn train(w: &Work, extra: &[&str]) -> PathBuf {
    let model = w.path("m.model");
    let en = fixture("corpus.en");
    let mut args = vec![
        "train-subword",
        "--input",
        p(&en),
        "--model",
        p(&model),
        "--vocab-size",
        "300",
        "--byte-fallback",
    ];
    args.extend_from_slice(extra);
    ok(&args);
    model
}

#[test]
fn encode_decode_round_trip_for_both_model_types() {
    for kind in ["bpe", "unigram"] {
        let w = Work::new();
        let model = train(&w, &["--model-type", kind]);
        let report = fs::read_to_string(w.path("m.model.report")).unwrap();
        assert!(report.contains(&format!("model_type\t{kind}\n")));
        let input = w.write("in.txt", "Please   speak more slowly.\n新しい 単語 🦀\n\n");
        let (enc, dec) = (w.path("enc"), w.path("dec"));
        ok(&[
            "encode",
            "--model",
            p(&model),
            "--input",
            p(&input),
            "--output",
            p(&enc),
        ]);
        assert!(fs::read_to_string(&enc).unwrap().contains("<0xF0>"));
        ok(&["decode", "--model", p(&model), "--input", p(&enc), "--output", p(&dec)]);
        assert_eq!(
            fs::read_to_string(&dec).unwrap(),
            "Please speak more slowly.\n新しい 単語 🦀\n\n"
        );
    }
}

#[test]
fn regularized_encoding_needs_a_seed_and_is_reproducible() {
    let w = Work::new();
    let model = train(&w, &["--model-type", "bpe"]);
    let input = fixture("corpus.en");
    let args = |out: &Path| -> Vec<String> {
        [
            "encode",
            "--model",
            p(&model),
            "--input",
            p(&input),
            "--output",
            p(out),
            "--dropout",
            "0.1",
            "--seed",
            "7",
        ]
        .map(String::from)
        .to_vec()
    };
    let (a, b) = (w.path("a"), w.path("b"));
    ok(&args(&a).iter().map(String::as_str).collect::<Vec<_>>());
    ok(&args(&b).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        code(&["encode", "--model", p(&model), "--input", p(&input), "--dropout", "0.1"]),
        2
    );
    assert_eq!(
        code(&[
            "encode",
            "--model",
            p(&model),
            "--input",
            p(&input),
            "--alpha",
            "0.5",
            "--seed",
            "1"
        ]),
        2
    );
}

#[test]
fn decode_with_detokenizer() {
    let w = Work::new();
    let model = train(&w, &["--model-type", "bpe", "--pretok", "13a"]);
    let input = w.write("in.txt", "Where is the station?\n");
    let pretok = w.path("pre");
    let (enc, dec) = (w.path("enc"), w.path("dec"));
    ok(&[
        "pretokenize",
        "--kind",
        "13a",
        "--input",
        p(&input),
        "--output",
        p(&pretok),
    ]);
    assert_eq!(fs::read_to_string(&pretok).unwrap(), "Where is the station ?\n");
    ok(&[
        "encode",
        "--model",
        p(&model),
        "--input",
        p(&input),
        "--pretok",
        "13a",
        "--output",
        p(&enc),
    ]);
    ok(&[
        "decode",
        "--model",
        p(&model),
        "--input",
        p(&enc),
        "--detok",
        "13a",
        "--output",
        p(&dec),
    ]);
    assert_eq!(fs::read_to_string(&dec).unwrap(), "Where is the station?\n");
}

#[test]
fn vocab_export_formats() {
    let w = Work::new();
    let model = train(&w, &[]);
    let (tokens, scored) = (w.path("v.tokens"), w.path("v.scores"));
    ok(&[
        "vocab",
        "--model",
        p(&model),
        "--output",
        p(&tokens),
        "--include-specials",
    ]);
    let lines: Vec<String> = fs::read_to_string(&tokens).unwrap().lines().map(String::from).collect();
    assert_eq!(&lines[..3], ["<unk>", "<s>", "</s>"]);
    assert!(lines.iter().all(|l| !l.contains('\t')));

    ok(&[
        "vocab",
        "--model",
        p(&model),
        "--output",
        p(&scored),
        "--format",
        "piece-logprob",
    ]);
    let parsed = mtprep::subword::read_piece_logprob(&scored).unwrap();
    let mtprep::subword::SubwordModel::Unigram(m) = mtprep::subword::load_model(&model).unwrap() else {
        panic!()
    };
    assert_eq!(parsed, m.pieces());
    assert_eq!(
        code(&["vocab", "--model", "/nonexistent/model", "--output", p(&scored)]),
        1
    );
}

#[test]
fn bleu_schemes_differ_on_japanese() {
    let (h, r) = (fixture("hyp.ja"), fixture("ref.ja"));
    let ja = ok(&["bleu", "--hyp", p(&h), "--ref", p(&r), "--scheme", "ja-char"]);
    let intl = ok(&["bleu", "--hyp", p(&h), "--ref", p(&r), "--scheme", "13a"]);
    let score = |s: &str| s.split_whitespace().nth(2).unwrap().parse::<f64>().unwrap();
    assert!(score(&ja) > score(&intl), "{ja} {intl}");
    assert!(ja.contains("tok:ja-char") && intl.contains("tok:13a"));
    assert!(ok(&["bleu", "--hyp", p(&r), "--ref", p(&r)]).starts_with("BLEU = 100.0 "));
    assert_eq!(code(&["bleu", "--hyp", p(&fixture("corpus.en")), "--ref", p(&r)]), 2);
}

#[test]
fn bleu_diff_refuses_mismatched_signatures() {
    let w = Work::new();
    let (h, r) = (fixture("hyp.ja"), fixture("ref.ja"));
    let (a, b, c) = (w.path("a"), w.path("b"), w.path("c"));
    ok(&[
        "bleu",
        "--hyp",
        p(&h),
        "--ref",
        p(&r),
        "--scheme",
        "ja-char",
        "--report",
        p(&a),
    ]);
    ok(&[
        "bleu",
        "--hyp",
        p(&r),
        "--ref",
        p(&r),
        "--scheme",
        "ja-char",
        "--report",
        p(&b),
    ]);
    ok(&[
        "bleu",
        "--hyp",
        p(&h),
        "--ref",
        p(&r),
        "--scheme",
        "13a",
        "--report",
        p(&c),
    ]);
    assert!(ok(&["bleu-diff", p(&a), p(&b)]).contains("-> 100.0"));
    let out = mtprep(&["bleu-diff", p(&a), p(&c)]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning: signatures differ"));
}

#[test]
fn stats_counts_and_oov() {
    let w = Work::new();
    let vocab = w.write("v", "the\ncat\nsat\n");
    let rep = w.path("stats.report");
    let out = ok(&[
        "stats",
        "--src",
        p(&fixture("five_tokens.txt")),
        "--vocab",
        p(&vocab),
        "--report",
        p(&rep),
    ]);
    assert!(out.contains("unique tokens  5"), "{out}");
    let report = fs::read_to_string(&rep).unwrap();
    assert!(report.contains("src.unique_tokens\t5\n"));
    assert!(report.contains("src.hist.0-9\t3\n"));
    let lines = ["the cat sat", "the cat", "a dog"];
    let expected = mtprep::subword::oov_rate(&lines, &mtprep::subword::Vocabulary::from_text("the\ncat\nsat\n"));
    assert!(report.contains(&format!("src.oov_rate\t{expected}\n")));
}

#[test]
fn truecasing_round_trip() {
    let w = Work::new();
    let train = w.write("t", "the cat saw Paris\nIn Paris the cat slept\n");
    let model = w.path("tc");
    ok(&["train-truecaser", "--input", p(&train), "--model", p(&model)]);
    let input = w.write("in", "The cat saw paris\n");
    let out = w.path("out");
    ok(&[
        "truecase",
        "--model",
        p(&model),
        "--input",
        p(&input),
        "--output",
        p(&out),
    ]);
    assert_eq!(fs::read_to_string(&out).unwrap(), "the cat saw Paris\n");
}

#[test]
fn help_and_unknown_flags() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["clean", "--help"]), 0);
    assert_eq!(code(&["bleu", "--no-such-flag"]), 2);
    assert_eq!(code(&["no-such-command"]), 2);
}
