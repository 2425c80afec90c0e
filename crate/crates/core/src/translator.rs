//! Translation-model contract and the co-occurrence lexicon model.
//!
//! The lexicon model is a deliberately small stand-in for a neural system:
//! training spreads one unit of mass per source word evenly over the target
//! words of its sentence, and translation maps each source word to its
//! highest-mass target word.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{Direction, ParallelCorpus};

#[derive(Debug, Error)]
pub enum TranslatorError {
    #[error("orientation mismatch: model is {model}, corpus is {corpus}")]
    Orientation { model: Direction, corpus: Direction },
    #[error("lexicon line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// What the pipeline needs from a translation model.
///
/// Implementations must be deterministic: `translate` depends only on the
/// current state and `train` only on the state and the corpus.
pub trait TranslationModel {
    fn direction(&self) -> &Direction;

    /// Continues training on `corpus`, which must share the model's
    /// orientation.
    fn train(&mut self, corpus: &ParallelCorpus) -> Result<(), TranslatorError>;

    fn translate(&self, sentence: &str) -> String;
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LexiconModel {
    direction: Direction,
    cooc: BTreeMap<String, BTreeMap<String, f64>>,
}

impl LexiconModel {
    pub fn new(direction: Direction) -> Self {
        Self {
            direction,
            cooc: BTreeMap::new(),
        }
    }

    /// A fresh model for the opposite orientation, trained on `corpus` with
    /// its pairs swapped.
    pub fn reversed_from(corpus: &ParallelCorpus) -> Result<Self, TranslatorError> {
        let swapped = corpus.swapped();
        let mut model = Self::new(swapped.direction.clone());
        model.train(&swapped)?;
        Ok(model)
    }

    pub fn count(&self, source: &str, target: &str) -> f64 {
        self.cooc
            .get(source)
            .and_then(|row| row.get(target))
            .copied()
            .unwrap_or(0.0)
    }

    /// Sum of the mass of `source` over all targets.
    pub fn total(&self, source: &str) -> f64 {
        self.cooc.get(source).map_or(0.0, |row| row.values().sum())
    }

    /// Number of `(source, target)` cells with mass.
    pub fn len(&self) -> usize {
        self.cooc.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.cooc.is_empty()
    }

    /// Cells in lexicographic `(source, target)` order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, f64)> {
        self.cooc.iter().flat_map(|(s, row)| {
            row.iter().map(move |(t, &c)| (s.as_str(), t.as_str(), c))
        })
    }

    fn add(&mut self, source: &str, target: &str, mass: f64) {
        *self
            .cooc
            .entry(source.to_owned())
            .or_default()
            .entry(target.to_owned())
            .or_insert(0.0) += mass;
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = Self::new(self.direction.clone());
        for (s, t, c) in self.entries() {
            out.add(s, t, c * factor);
        }
        out
    }

    /// Highest-mass target for `word`; ties go to the smallest target string.
    pub fn best_target(&self, word: &str) -> Option<&str> {
        let row = self.cooc.get(word)?;
        let mut best: Option<(&str, f64)> = None;
        // BTreeMap iterates targets in ascending order, so a strict `>` keeps
        // the smallest target among equals.
        for (t, &c) in row {
            if best.is_none_or(|(_, b)| c > b) {
                best = Some((t, c));
            }
        }
        best.map(|(t, _)| t)
    }

    /// Serialized form: a `#direction` header, then sorted
    /// `source<TAB>target<TAB>count` lines with counts printed in shortest
    /// round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "#direction\t{}\t{}\n",
            self.direction.source, self.direction.target
        );
        for (s, t, c) in self.entries() {
            let _ = writeln!(out, "{s}\t{t}\t{c}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TranslatorError> {
        let err = |line: usize, message: String| TranslatorError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines
            .next()
            .ok_or_else(|| err(1, "empty lexicon".into()))?;
        let mut parts = header.split('\t');
        let direction = match (parts.next(), parts.next(), parts.next(), parts.next()) {
            (Some("#direction"), Some(s), Some(t), None) => Direction::new(s, t),
            _ => return Err(err(1, "expected `#direction<TAB>source<TAB>target`".into())),
        };
        let mut model = Self::new(direction);
        let mut previous: Option<(String, String)> = None;
        for (n, line) in lines {
            let mut f = line.split('\t');
            let (Some(s), Some(t), Some(c), None) = (f.next(), f.next(), f.next(), f.next()) else {
                return Err(err(n, "expected `source<TAB>target<TAB>count`".into()));
            };
            let count: f64 = c
                .parse()
                .map_err(|_| err(n, format!("bad count `{c}`")))?;
            if !(count.is_finite() && count >= 0.0) {
                return Err(err(n, format!("count must be non-negative, got {c}")));
            }
            let key = (s.to_owned(), t.to_owned());
            if previous.as_ref().is_some_and(|p| *p >= key) {
                return Err(err(n, format!("entries out of order or duplicated at `{s}\t{t}`")));
            }
            model.add(s, t, count);
            previous = Some(key);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), TranslatorError> {
        fs::write(path, self.to_text()).map_err(|source| TranslatorError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, TranslatorError> {
        let text = fs::read_to_string(path).map_err(|source| TranslatorError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}

impl TranslationModel for LexiconModel {
    fn direction(&self) -> &Direction {
        &self.direction
    }

    /// Every `(source word, target word)` cell of each pair gains
    /// `1 / |target words|`. Counts accumulate across calls.
    fn train(&mut self, corpus: &ParallelCorpus) -> Result<(), TranslatorError> {
        if corpus.direction != self.direction {
            return Err(TranslatorError::Orientation {
                model: self.direction.clone(),
                corpus: corpus.direction.clone(),
            });
        }
        for pair in corpus {
            let targets: Vec<&str> = pair.target.split_whitespace().collect();
            if targets.is_empty() {
                continue;
            }
            let mass = 1.0 / targets.len() as f64;
            for s in pair.source.split_whitespace() {
                for t in &targets {
                    self.add(s, t, mass);
                }
            }
        }
        Ok(())
    }

    /// Word-by-word argmax; unseen words are copied through.
    fn translate(&self, sentence: &str) -> String {
        sentence
            .split_whitespace()
            .map(|w| self.best_target(w).unwrap_or(w))
            .collect::<Vec<_>>()
            .join(" ")
    }
}
