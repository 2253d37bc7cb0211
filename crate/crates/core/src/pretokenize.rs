//! Rule-based pretokenizers, detokenization, truecasing and an
//! external-command hook for tools such as Moses or MeCab.
//!
//! `Intl13a` is a simplified stand-in for the mteval-v13a rules, applied in order:
//!
//! 1. collapse whitespace runs to a single space,
//! 2. pad every character of `,.!?;:()[]"「」、。！？` with spaces, except a
//!    period with a digit on both sides,
//! 3. split on spaces.
//!
//! Its detokenizer joins with spaces, then removes the space before any of
//! `,.!?;:)]」、。！？` and after any of `([「`. Known divergences from the
//! Perl original: no handling of `&quot;`-style entities, dashes, or
//! the `'s` contractions, and `"` is never reattached.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Command, Stdio};
use std::str::FromStr;

use unicode_segmentation::UnicodeSegmentation;

use crate::error::{Error, Result};

const PADDED: &str = ",.!?;:()[]\"「」、。！？";
const ATTACH_LEFT: &str = ",.!?;:)]」、。！？";
const ATTACH_RIGHT: &str = "([「";

/// Lines handed to an external tokenizer per subprocess.
pub const EXTERNAL_BATCH: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PretokenizerKind {
    None,
    Whitespace,
    Intl13a,
    Character,
    UnicodeScript,
    /// Shell command reading lines on stdin and writing one tokenized line per input line.
    External(String),
}

impl FromStr for PretokenizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => PretokenizerKind::None,
            "whitespace" | "ws" => PretokenizerKind::Whitespace,
            "13a" | "intl13a" => PretokenizerKind::Intl13a,
            "char" | "character" => PretokenizerKind::Character,
            "script" | "unicode-script" | "unicode_script" => PretokenizerKind::UnicodeScript,
            _ => match s.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => PretokenizerKind::External(cmd.to_owned()),
                Some(_) => return Err(Error::Config("external tokenizer command is empty".into())),
                None => return Err(Error::Config(format!("unknown pretokenizer {s:?}"))),
            },
        })
    }
}

impl fmt::Display for PretokenizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PretokenizerKind::None => f.write_str("none"),
            PretokenizerKind::Whitespace => f.write_str("whitespace"),
            PretokenizerKind::Intl13a => f.write_str("13a"),
            PretokenizerKind::Character => f.write_str("char"),
            PretokenizerKind::UnicodeScript => f.write_str("script"),
            PretokenizerKind::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

/// Coarse script classes used for boundary splitting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScriptClass {
    Han,
    Hiragana,
    Katakana,
    Latin,
    Digit,
    Other,
}

pub fn is_digit(c: char) -> bool {
    c.is_ascii_digit() || ('０'..='９').contains(&c)
}

pub fn script_class(c: char) -> ScriptClass {
    let cp = c as u32;
    if is_digit(c) {
        ScriptClass::Digit
    } else if matches!(cp, 0x3040..=0x309F) {
        ScriptClass::Hiragana
    } else if matches!(cp, 0x30A0..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9F) {
        ScriptClass::Katakana
    } else if matches!(cp, 0x3005 | 0x3007 | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x3134F) {
        ScriptClass::Han
    } else if c.is_ascii_alphabetic()
        || (matches!(cp, 0xC0..=0x24F | 0x1E00..=0x1EFF) && c.is_alphabetic())
        || matches!(cp, 0xFF21..=0xFF3A | 0xFF41..=0xFF5A)
    {
        ScriptClass::Latin
    } else {
        ScriptClass::Other
    }
}

fn intl13a(text: &str) -> Vec<String> {
    let normalized = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let chars: Vec<char> = normalized.chars().collect();
    let mut padded = String::with_capacity(normalized.len() + 8);
    for (i, &c) in chars.iter().enumerate() {
        let decimal_point =
            c == '.' && i > 0 && chars[i - 1].is_ascii_digit() && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if PADDED.contains(c) && !decimal_point {
            padded.push(' ');
            padded.push(c);
            padded.push(' ');
        } else {
            padded.push(c);
        }
    }
    padded.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

fn by_script(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for word in text.split_whitespace() {
        let mut current = String::new();
        let mut current_class = None;
        for c in word.chars() {
            let class = script_class(c);
            if current_class != Some(class) || class == ScriptClass::Han {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                current_class = Some(class);
            }
            current.push(c);
        }
        if !current.is_empty() {
            tokens.push(current);
        }
    }
    tokens
}

/// Tokenizes with one of the built-in rules. External commands go through
/// [`pretokenize_lines`].
pub fn pretokenize(text: &str, kind: &PretokenizerKind) -> Result<Vec<String>> {
    Ok(match kind {
        PretokenizerKind::None => {
            if text.is_empty() {
                Vec::new()
            } else {
                vec![text.to_owned()]
            }
        }
        PretokenizerKind::Whitespace => text.split_whitespace().map(str::to_owned).collect(),
        PretokenizerKind::Intl13a => intl13a(text),
        PretokenizerKind::Character => text
            .graphemes(true)
            .filter(|g| !g.chars().all(char::is_whitespace))
            .map(str::to_owned)
            .collect(),
        PretokenizerKind::UnicodeScript => by_script(text),
        PretokenizerKind::External(cmd) => {
            let mut out = run_external(cmd, &[text])?;
            out.pop().unwrap_or_default()
        }
    })
}

/// Tokenizes many lines. External commands are run once per batch of
/// [`EXTERNAL_BATCH`] lines and results are returned in input order.
pub fn pretokenize_lines<S: AsRef<str>>(lines: &[S], kind: &PretokenizerKind) -> Result<Vec<Vec<String>>> {
    match kind {
        PretokenizerKind::External(cmd) => {
            let mut out = Vec::with_capacity(lines.len());
            for batch in lines.chunks(EXTERNAL_BATCH) {
                let refs: Vec<&str> = batch.iter().map(AsRef::as_ref).collect();
                out.extend(run_external(cmd, &refs)?);
            }
            Ok(out)
        }
        _ => lines.iter().map(|l| pretokenize(l.as_ref(), kind)).collect(),
    }
}

fn run_external(cmd: &str, lines: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::inherit())
        .spawn()
        .map_err(|e| Error::External(format!("failed to start {cmd:?}: {e}")))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let input: String = lines.iter().flat_map(|l| [*l, "\n"]).collect();
    // Feed stdin from a thread so a chatty command cannot deadlock on a full pipe.
    let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
    let stdout = child.stdout.take().expect("piped stdout");
    let mut output = Vec::with_capacity(lines.len());
    for line in BufReader::new(stdout).lines() {
        let line = line.map_err(|e| Error::External(format!("reading output of {cmd:?}: {e}")))?;
        output.push(line.split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect());
    }
    let status = child.wait()?;
    writer
        .join()
        .expect("writer thread")
        .map_err(|e| Error::External(format!("writing to {cmd:?}: {e}")))?;
    if !status.success() {
        return Err(Error::External(format!("{cmd:?} exited with {status}")));
    }
    if output.len() != lines.len() {
        return Err(Error::External(format!(
            "{cmd:?} produced {} lines for {} input lines",
            output.len(),
            lines.len()
        )));
    }
    Ok(output)
}

fn token_class(token: &str) -> ScriptClass {
    token.chars().next().map_or(ScriptClass::Other, script_class)
}

fn spaced_class(token: &str) -> bool {
    matches!(token_class(token), ScriptClass::Latin | ScriptClass::Digit)
}

fn single_char_in(token: &str, set: &str) -> bool {
    let mut it = token.chars();
    matches!((it.next(), it.next()), (Some(c), None) if set.contains(c))
}

/// Inverse of [`pretokenize`] as far as the token list allows.
///
/// For the character and script kinds no spacing survives tokenization, so a
/// space is restored only between two tokens that are both Latin or digits.
pub fn detokenize<S: AsRef<str>>(tokens: &[S], kind: &PretokenizerKind) -> String {
    let mut out = String::new();
    let mut prev: Option<&str> = None;
    for tok in tokens.iter().map(AsRef::as_ref) {
        if let Some(p) = prev {
            let space = match kind {
                PretokenizerKind::Intl13a => !single_char_in(tok, ATTACH_LEFT) && !single_char_in(p, ATTACH_RIGHT),
                PretokenizerKind::Character | PretokenizerKind::UnicodeScript => spaced_class(p) && spaced_class(tok),
                _ => true,
            };
            if space {
                out.push(' ');
            }
        }
        out.push_str(tok);
        prev = Some(tok);
    }
    out
}

/// Character-wise lowercasing.
pub fn lowercase(text: &str) -> String {
    text.chars().flat_map(char::to_lowercase).collect()
}

fn capitalize(token: &str) -> String {
    let mut chars = token.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Most frequent non-sentence-initial surface form per lowercased token.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TruecaseModel {
    pub forms: HashMap<String, (String, u64)>,
}

impl TruecaseModel {
    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&str> {
        self.forms.get(&lowercase(token)).map(|(form, _)| form.as_str())
    }

    /// `lower<TAB>form<TAB>count` lines sorted by key.
    pub fn to_tsv(&self) -> String {
        let mut keys: Vec<&String> = self.forms.keys().collect();
        keys.sort();
        keys.into_iter()
            .map(|k| {
                let (form, count) = &self.forms[k];
                format!("{k}\t{form}\t{count}\n")
            })
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut forms = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let bad = || Error::ModelFormat {
                line: i + 1,
                message: "expected lower<TAB>form<TAB>count".into(),
            };
            let mut f = line.split('\t');
            let (Some(k), Some(form), Some(count), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(bad());
            };
            let count = count.parse().map_err(|_| bad())?;
            forms.insert(k.to_owned(), (form.to_owned(), count));
        }
        Ok(TruecaseModel { forms })
    }
}

pub fn train_truecaser<S: AsRef<str>>(lines: &[S]) -> TruecaseModel {
    // Forms per key in first-seen order so ties resolve to the earliest form.
    let mut counts: HashMap<String, Vec<(String, u64)>> = HashMap::new();
    for line in lines {
        for tok in line.as_ref().split_whitespace().skip(1) {
            let forms = counts.entry(lowercase(tok)).or_default();
            match forms.iter_mut().find(|(f, _)| f == tok) {
                Some(entry) => entry.1 += 1,
                None => forms.push((tok.to_owned(), 1)),
            }
        }
    }
    let forms = counts
        .into_iter()
        .map(|(k, forms)| {
            let best = forms
                .into_iter()
                .reduce(|best, cand| if cand.1 > best.1 { cand } else { best })
                .expect("at least one form");
            (k, best)
        })
        .collect();
    TruecaseModel { forms }
}

/// Restores casing token by token; output tokens are joined by single spaces.
pub fn truecase(text: &str, model: &TruecaseModel) -> String {
    text.split_whitespace()
        .enumerate()
        .map(|(i, tok)| match model.get(tok) {
            Some(form) => form.to_owned(),
            None if i == 0 => capitalize(tok),
            None => tok.to_owned(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}
