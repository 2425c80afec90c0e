//! Parallel and monolingual corpora.
//!
//! Files are UTF-8, LF-terminated, one sentence per line. A parallel corpus
//! is two such files with equal line counts; line `i` of the source file
//! pairs with line `i` of the target file.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::shuffle;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid UTF-8 in {path} at byte offset {offset}")]
    Decode { path: PathBuf, offset: usize },
    #[error("invalid UTF-8 at byte offset {offset}")]
    DecodeBytes { offset: usize },
    #[error("line count mismatch: {source_path} has {source_lines} lines, {target_path} has {target_lines}")]
    LineCountMismatch {
        source_path: PathBuf,
        source_lines: usize,
        target_path: PathBuf,
        target_lines: usize,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("held-out fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("cannot split a corpus of {0} pairs; at least 2 are required")]
    TooSmall(usize),
    #[error("empty sentence in {what}")]
    EmptySentence { what: &'static str },
}

/// Collapses whitespace, strips control characters and applies NFC.
///
/// Every control character (general category Cc) is treated as a word
/// separator, so `"a\u{0}b"` becomes `"a b"`.
pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.nfc() {
        if ch.is_whitespace() || ch.is_control() {
            pending_space = true;
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        out.push(ch);
    }
    out
}

/// Decodes `bytes` as UTF-8 and normalizes the result.
pub fn normalize_bytes(bytes: &[u8]) -> Result<String, CorpusError> {
    match std::str::from_utf8(bytes) {
        Ok(s) => Ok(normalize(s)),
        Err(e) => Err(CorpusError::DecodeBytes {
            offset: e.valid_up_to(),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Original,
    Synthetic,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Origin::Original => "original",
            Origin::Synthetic => "synthetic",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SentencePair {
    pub source: String,
    pub target: String,
    pub origin: Origin,
}

impl SentencePair {
    /// Normalizes both sides; `None` when either side ends up empty.
    pub fn new(source: &str, target: &str, origin: Origin) -> Option<Self> {
        let source = normalize(source);
        let target = normalize(target);
        if source.is_empty() || target.is_empty() {
            return None;
        }
        Some(Self {
            source,
            target,
            origin,
        })
    }

    pub fn swapped(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
            origin: self.origin,
        }
    }
}

/// Language tags of a sentence pair orientation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Direction {
    pub source: String,
    pub target: String,
}

impl Direction {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
        }
    }
}

impl Default for Direction {
    fn default() -> Self {
        Self::new("src", "tgt")
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.source, self.target)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ParallelCorpus {
    pub direction: Direction,
    pairs: Vec<SentencePair>,
}

impl ParallelCorpus {
    pub fn new(direction: Direction) -> Self {
        Self {
            direction,
            pairs: Vec::new(),
        }
    }

    /// Builds a corpus from already-constructed pairs.
    pub fn from_pairs(direction: Direction, pairs: Vec<SentencePair>) -> Self {
        Self { direction, pairs }
    }

    /// Adds a pair, normalizing it first. Returns false if it was dropped.
    pub fn push(&mut self, source: &str, target: &str, origin: Origin) -> bool {
        match SentencePair::new(source, target, origin) {
            Some(p) => {
                self.pairs.push(p);
                true
            }
            None => false,
        }
    }

    pub fn pairs(&self) -> &[SentencePair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SentencePair> {
        self.pairs.iter()
    }

    /// The same pairs with source and target exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            direction: self.direction.reversed(),
            pairs: self.pairs.iter().map(SentencePair::swapped).collect(),
        }
    }

    /// Writes the two sides as line-aligned files.
    pub fn write(&self, source_path: &Path, target_path: &Path) -> Result<(), CorpusError> {
        write_lines(source_path, self.pairs.iter().map(|p| p.source.as_str()))?;
        write_lines(target_path, self.pairs.iter().map(|p| p.target.as_str()))
    }
}

impl<'a> IntoIterator for &'a ParallelCorpus {
    type Item = &'a SentencePair;
    type IntoIter = std::slice::Iter<'a, SentencePair>;

    fn into_iter(self) -> Self::IntoIter {
        self.pairs.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonolingualCorpus {
    pub language_tag: String,
    sentences: Vec<String>,
}

impl MonolingualCorpus {
    /// Normalizes each sentence and drops the ones that become empty.
    pub fn new<I, S>(language_tag: impl Into<String>, sentences: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            language_tag: language_tag.into(),
            sentences: sentences
                .into_iter()
                .map(|s| normalize(s.as_ref()))
                .filter(|s| !s.is_empty())
                .collect(),
        }
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// A parallel corpus together with the number of pairs that were dropped
/// because one side normalized to the empty string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedCorpus {
    pub corpus: ParallelCorpus,
    pub dropped: usize,
}

/// Reads a file and splits it into raw (unnormalized) lines.
///
/// A trailing LF does not start a new line.
pub fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let text = std::str::from_utf8(&bytes).map_err(|e| CorpusError::Decode {
        path: path.to_path_buf(),
        offset: e.valid_up_to(),
    })?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let body = text.strip_suffix('\n').unwrap_or(text);
    Ok(body.split('\n').map(str::to_owned).collect())
}

pub fn write_lines<'a>(
    path: &Path,
    lines: impl IntoIterator<Item = &'a str>,
) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for line in lines {
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Loads a line-aligned parallel corpus, tagging every pair as original.
pub fn load_parallel(
    source_path: &Path,
    target_path: &Path,
    direction: Direction,
) -> Result<LoadedCorpus, CorpusError> {
    let src = read_lines(source_path)?;
    let tgt = read_lines(target_path)?;
    if src.len() != tgt.len() {
        return Err(CorpusError::LineCountMismatch {
            source_path: source_path.to_path_buf(),
            source_lines: src.len(),
            target_path: target_path.to_path_buf(),
            target_lines: tgt.len(),
        });
    }
    let mut corpus = ParallelCorpus::new(direction);
    let mut dropped = 0;
    for (s, t) in src.iter().zip(&tgt) {
        if !corpus.push(s, t, Origin::Original) {
            dropped += 1;
        }
    }
    Ok(LoadedCorpus { corpus, dropped })
}

pub fn load_monolingual(
    path: &Path,
    language_tag: impl Into<String>,
) -> Result<MonolingualCorpus, CorpusError> {
    Ok(MonolingualCorpus::new(language_tag, read_lines(path)?))
}

/// Seeded train/test split.
///
/// The indices `0..n` are shuffled with the seeded generator and the first
/// `round(fraction * n)` (clamped to `1..=n-1`) become the test set. Both
/// halves keep the corpus order of their pairs.
pub fn split(
    corpus: &ParallelCorpus,
    held_out_fraction: f64,
    seed: u64,
) -> Result<(ParallelCorpus, ParallelCorpus), CorpusError> {
    if !(held_out_fraction > 0.0 && held_out_fraction < 1.0) {
        return Err(CorpusError::Fraction(held_out_fraction));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(CorpusError::TooSmall(n));
    }
    let test_len = ((held_out_fraction * n as f64).round() as usize).clamp(1, n - 1);

    let mut rng = shuffle::seeded_rng(seed);
    let order = shuffle::shuffled_indices(n, &mut rng);
    let mut in_test = vec![false; n];
    for &i in &order[..test_len] {
        in_test[i] = true;
    }

    let mut train = ParallelCorpus::new(corpus.direction.clone());
    let mut test = ParallelCorpus::new(corpus.direction.clone());
    for (pair, held) in corpus.pairs.iter().zip(in_test) {
        if held {
            test.pairs.push(pair.clone());
        } else {
            train.pairs.push(pair.clone());
        }
    }
    Ok((train, test))
}

/// Original pairs followed by synthetic pairs, origin flags untouched.
pub fn mix(original: &ParallelCorpus, synthetic: &ParallelCorpus) -> ParallelCorpus {
    let mut pairs = Vec::with_capacity(original.len() + synthetic.len());
    pairs.extend_from_slice(&original.pairs);
    pairs.extend_from_slice(&synthetic.pairs);
    ParallelCorpus {
        direction: original.direction.clone(),
        pairs,
    }
}
