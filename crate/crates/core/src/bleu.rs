//! Corpus and sentence BLEU.
//!
//! Clipped n-gram matches and candidate n-gram totals are pooled over the
//! whole corpus as exact integers; floating point only enters when the
//! weighted geometric mean and brevity penalty are taken.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BleuError {
    #[error("{candidates} candidates but {references} reference sets")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("sentence {0} has no reference")]
    NoReference(usize),
    #[error("invalid BLEU config: {0}")]
    Config(String),
    #[error("malformed BLEU report: {0}")]
    Parse(String),
}

/// An exact non-negative fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        if denominator == 0 {
            Self {
                numerator: 0,
                denominator: 1,
            }
        } else {
            Self {
                numerator,
                denominator,
            }
        }
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Smoothing {
    #[default]
    None,
    /// Zero match counts are replaced by epsilon.
    AddEpsilon(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuConfig {
    max_n: usize,
    weights: Vec<f64>,
    smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self::uniform(4)
    }
}

impl BleuConfig {
    /// Uniform weights `1/max_n`, no smoothing. `max_n` of 0 is treated as 1.
    pub fn uniform(max_n: usize) -> Self {
        let max_n = max_n.max(1);
        Self {
            max_n,
            weights: vec![1.0 / max_n as f64; max_n],
            smoothing: Smoothing::None,
        }
    }

    pub fn new(weights: Vec<f64>, smoothing: Smoothing) -> Result<Self, BleuError> {
        if weights.is_empty() {
            return Err(BleuError::Config("max_n must be at least 1".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(BleuError::Config(format!("weights must be non-negative: {weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(BleuError::Config(format!("weights sum to {sum}, not 1")));
        }
        if let Smoothing::AddEpsilon(eps) = smoothing {
            if !(eps > 0.0 && eps <= 1.0) {
                return Err(BleuError::Config(format!("epsilon must lie in (0, 1], got {eps}")));
            }
        }
        Ok(Self {
            max_n: weights.len(),
            weights,
            smoothing,
        })
    }

    pub fn with_smoothing(mut self, smoothing: Smoothing) -> Result<Self, BleuError> {
        self.smoothing = smoothing;
        Self::new(self.weights, smoothing)
    }

    pub fn max_n(&self) -> usize {
        self.max_n
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    pub precisions: Vec<Ratio>,
    pub candidate_length: u64,
    pub reference_length: u64,
    pub brevity_penalty: f64,
    pub score: f64,
}

impl BleuReport {
    /// Score scaled to 0-100 with two decimals, e.g. `77.88`.
    pub fn display_score(&self) -> String {
        format!("{:.2}", self.score * 100.0)
    }

    pub fn to_json(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("score".into(), Value::from(self.score));
        obj.insert("bp".into(), Value::from(self.brevity_penalty));
        obj.insert("c".into(), Value::from(self.candidate_length));
        obj.insert("r".into(), Value::from(self.reference_length));
        for (i, p) in self.precisions.iter().enumerate() {
            obj.insert(
                format!("p{}", i + 1),
                Value::from(vec![p.numerator, p.denominator]),
            );
        }
        Value::Object(obj)
    }

    pub fn from_json(value: &Value) -> Result<Self, BleuError> {
        let obj = value
            .as_object()
            .ok_or_else(|| BleuError::Parse("expected an object".into()))?;
        let float = |key: &str| {
            obj.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| BleuError::Parse(format!("missing number `{key}`")))
        };
        let int = |key: &str| {
            obj.get(key)
                .and_then(Value::as_u64)
                .ok_or_else(|| BleuError::Parse(format!("missing integer `{key}`")))
        };
        let mut precisions = Vec::new();
        while let Some(p) = obj.get(&format!("p{}", precisions.len() + 1)) {
            let pair = p
                .as_array()
                .filter(|a| a.len() == 2)
                .and_then(|a| Some((a[0].as_u64()?, a[1].as_u64()?)))
                .ok_or_else(|| {
                    BleuError::Parse(format!("p{} must be [numerator, denominator]", precisions.len() + 1))
                })?;
            precisions.push(Ratio {
                numerator: pair.0,
                denominator: pair.1,
            });
        }
        Ok(Self {
            precisions,
            candidate_length: int("c")?,
            reference_length: int("r")?,
            brevity_penalty: float("bp")?,
            score: float("score")?,
        })
    }
}

/// Sliding-window n-gram counts; empty when the sequence is shorter than `n`.
pub fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut counts = HashMap::new();
    if n == 0 {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped matches and total candidate n-grams, unreduced.
fn clipped_counts<T: Eq + Hash>(candidate: &[T], references: &[Vec<T>], n: usize) -> (u64, u64) {
    let cand = ngram_counts(candidate, n);
    let mut max_ref: HashMap<&[T], u64> = HashMap::new();
    for reference in references {
        for (gram, count) in ngram_counts(reference, n) {
            let slot = max_ref.entry(gram).or_insert(0);
            *slot = (*slot).max(count);
        }
    }
    let matched = cand
        .iter()
        .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = candidate.len().saturating_sub(n - 1) as u64;
    (matched, total)
}

/// Modified n-gram precision: candidate counts clipped by the largest count
/// of the same n-gram in any single reference.
pub fn modified_precision<T: Eq + Hash>(candidate: &[T], references: &[Vec<T>], n: usize) -> Ratio {
    if n == 0 {
        return Ratio::new(0, 1);
    }
    let (matched, total) = clipped_counts(candidate, references, n);
    Ratio::new(matched, total)
}

pub fn brevity_penalty(c: u64, r: u64) -> f64 {
    if c > r {
        1.0
    } else if c == 0 {
        0.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_length<T>(c: usize, references: &[Vec<T>]) -> usize {
    references
        .iter()
        .map(Vec::len)
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(0)
}

fn combine(precisions: &[Ratio], bp: f64, config: &BleuConfig) -> f64 {
    if bp == 0.0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for (p, &w) in precisions.iter().zip(&config.weights) {
        let value = match config.smoothing {
            Smoothing::None => {
                if p.numerator == 0 {
                    return 0.0;
                }
                p.value()
            }
            Smoothing::AddEpsilon(eps) => {
                if p.numerator == 0 {
                    eps / p.denominator.max(1) as f64
                } else {
                    p.value()
                }
            }
        };
        if w > 0.0 {
            log_sum += w * value.ln();
        }
    }
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

pub fn corpus_bleu<T: Eq + Hash>(
    candidates: &[Vec<T>],
    references: &[Vec<Vec<T>>],
    config: &BleuConfig,
) -> Result<BleuReport, BleuError> {
    if candidates.len() != references.len() {
        return Err(BleuError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(BleuError::EmptyCorpus);
    }
    if let Some(i) = references.iter().position(Vec::is_empty) {
        return Err(BleuError::NoReference(i));
    }

    let mut matched = vec![0u64; config.max_n];
    let mut totals = vec![0u64; config.max_n];
    let mut c = 0u64;
    let mut r = 0u64;
    for (cand, refs) in candidates.iter().zip(references) {
        c += cand.len() as u64;
        r += closest_ref_length(cand.len(), refs) as u64;
        for n in 1..=config.max_n {
            let (m, t) = clipped_counts(cand, refs, n);
            matched[n - 1] += m;
            totals[n - 1] += t;
        }
    }
    let precisions: Vec<Ratio> = matched
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| Ratio::new(m, t))
        .collect();
    let bp = brevity_penalty(c, r);
    let score = combine(&precisions, bp, config);
    Ok(BleuReport {
        precisions,
        candidate_length: c,
        reference_length: r,
        brevity_penalty: bp,
        score,
    })
}

pub fn sentence_bleu<T: Eq + Hash + Clone>(
    candidate: &[T],
    references: &[Vec<T>],
    config: &BleuConfig,
) -> Result<BleuReport, BleuError> {
    corpus_bleu(&[candidate.to_vec()], &[references.to_vec()], config)
}

/// Whitespace tokenization used for all BLEU scoring.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}
