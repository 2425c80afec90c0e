//! Backtranslation with iterative retraining.
//!
//! Both translation models are first trained on the original training pairs.
//! Each iteration then
//!
//! 1. backtranslates the target-language monolingual text with the reverse
//!    model, pairing every translation with its genuine target sentence;
//! 2. when bidirectional, translates the source-language monolingual text
//!    with the forward model and swaps those pairs into the source->target
//!    frame;
//! 3. drops synthetic pairs that would leak held-out sentences into
//!    training and optionally subsamples the rest down to a cap;
//! 4. appends the survivors to the training corpus and continues training
//!    both models on them;
//! 5. scores both directions on the held-out set.
//!
//! Synthetic data from earlier iterations is kept; the training corpus only
//! grows.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::bleu::{self, BleuConfig, BleuError, BleuReport, Smoothing};
use crate::corpus::{
    self, CorpusError, Direction, MonolingualCorpus, Origin, ParallelCorpus, SentencePair,
};
use crate::shuffle::{self, SeededRng};
use crate::translator::{LexiconModel, TranslationModel, TranslatorError};

pub const DEFAULT_ITERATIONS: usize = 5;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown config key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Translator(#[from] TranslatorError),
    #[error(transparent)]
    Bleu(#[from] BleuError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("model {model} cannot translate `{language}` text")]
    Orientation { model: Direction, language: String },
    #[error("malformed report line {line}: {message}")]
    Report { line: usize, message: String },
    #[error("writing report: {0}")]
    Sink(#[source] io::Error),
    #[error("iteration {index}: {source}")]
    Iteration {
        index: usize,
        #[source]
        source: Box<PipelineError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub iterations: usize,
    pub bidirectional: bool,
    pub synthetic_cap: Option<usize>,
    pub seed: u64,
    pub held_out_fraction: f64,
    pub bleu: BleuConfig,
    pub source_lang: String,
    pub target_lang: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            bidirectional: true,
            synthetic_cap: None,
            seed: 0,
            held_out_fraction: 0.1,
            bleu: BleuConfig::default(),
            source_lang: "src".into(),
            target_lang: "tgt".into(),
        }
    }
}

impl PipelineConfig {
    pub fn direction(&self) -> Direction {
        Direction::new(self.source_lang.clone(), self.target_lang.clone())
    }

    /// Parses the flat `key = value` format. Blank lines and lines starting
    /// with `#` are ignored; unset keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut max_n = cfg.bleu.max_n();
        let mut smoothing = Smoothing::None;
        let mut smoothing_line = 0;

        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            let invalid = |reason: &str| ConfigError::InvalidValue {
                line,
                key: key.to_owned(),
                value: value.to_owned(),
                reason: reason.to_owned(),
            };
            match key {
                "iterations" => {
                    cfg.iterations = value
                        .parse()
                        .ok()
                        .filter(|&n: &usize| n >= 1)
                        .ok_or_else(|| invalid("expected an integer >= 1"))?;
                }
                "bidirectional" => {
                    cfg.bidirectional = value.parse().map_err(|_| invalid("expected true or false"))?;
                }
                "synthetic_cap" => {
                    cfg.synthetic_cap = match value {
                        "none" | "unlimited" => None,
                        v => Some(v.parse().map_err(|_| invalid("expected an integer >= 0 or `none`"))?),
                    };
                }
                "seed" => cfg.seed = value.parse().map_err(|_| invalid("expected a 64-bit unsigned integer"))?,
                "held_out_fraction" => {
                    cfg.held_out_fraction = value
                        .parse()
                        .ok()
                        .filter(|f: &f64| *f > 0.0 && *f < 1.0)
                        .ok_or_else(|| invalid("expected a number strictly between 0 and 1"))?;
                }
                "bleu_max_n" => {
                    max_n = value
                        .parse()
                        .ok()
                        .filter(|&n: &usize| n >= 1)
                        .ok_or_else(|| invalid("expected an integer >= 1"))?;
                }
                "bleu_smoothing" => {
                    smoothing_line = line;
                    smoothing = parse_smoothing(value).ok_or_else(|| invalid("expected `none` or `epsilon:<value>`"))?;
                }
                "source_lang" | "target_lang" => {
                    if value.is_empty() || value.contains(char::is_whitespace) {
                        return Err(invalid("expected a single word"));
                    }
                    if key == "source_lang" {
                        cfg.source_lang = value.to_owned();
                    } else {
                        cfg.target_lang = value.to_owned();
                    }
                }
                _ => {
                    return Err(ConfigError::UnknownKey {
                        line,
                        key: key.to_owned(),
                    })
                }
            }
        }
        cfg.bleu = BleuConfig::uniform(max_n)
            .with_smoothing(smoothing)
            .map_err(|e| ConfigError::InvalidValue {
                line: smoothing_line,
                key: "bleu_smoothing".into(),
                value: format!("{smoothing:?}"),
                reason: e.to_string(),
            })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// `none` or `epsilon:<value>`.
pub fn parse_smoothing(value: &str) -> Option<Smoothing> {
    match value {
        "none" => Some(Smoothing::None),
        v => v
            .strip_prefix("epsilon:")
            .and_then(|e| e.parse().ok())
            .map(Smoothing::AddEpsilon),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    /// 1-based.
    pub iteration: usize,
    pub synthetic_added: usize,
    pub train_size: usize,
    /// Synthetic pairs discarded because they repeat a held-out sentence.
    pub leakage_dropped: usize,
    pub bleu_forward: BleuReport,
    pub bleu_reverse: Option<BleuReport>,
}

impl IterationReport {
    pub fn to_json_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("iteration".into(), Value::from(self.iteration));
        obj.insert("synthetic_added".into(), Value::from(self.synthetic_added));
        obj.insert("train_size".into(), Value::from(self.train_size));
        obj.insert("leakage_dropped".into(), Value::from(self.leakage_dropped));
        obj.insert("bleu_forward".into(), Value::from(self.bleu_forward.display_score()));
        obj.insert(
            "bleu_reverse".into(),
            self.bleu_reverse
                .as_ref()
                .map_or(Value::Null, |r| Value::from(r.display_score())),
        );
        obj.insert("forward".into(), self.bleu_forward.to_json());
        obj.insert(
            "reverse".into(),
            self.bleu_reverse.as_ref().map_or(Value::Null, BleuReport::to_json),
        );
        Value::Object(obj).to_string()
    }

    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let value: Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let obj = value.as_object().ok_or("expected an object")?;
        let int = |key: &str| {
            obj.get(key)
                .and_then(Value::as_u64)
                .map(|v| v as usize)
                .ok_or_else(|| format!("missing integer `{key}`"))
        };
        let forward = obj.get("forward").ok_or("missing `forward`")?;
        let reverse = match obj.get("reverse") {
            None | Some(Value::Null) => None,
            Some(v) => Some(BleuReport::from_json(v).map_err(|e| e.to_string())?),
        };
        Ok(Self {
            iteration: int("iteration")?,
            synthetic_added: int("synthetic_added")?,
            train_size: int("train_size")?,
            leakage_dropped: int("leakage_dropped")?,
            bleu_forward: BleuReport::from_json(forward).map_err(|e| e.to_string())?,
            bleu_reverse: reverse,
        })
    }
}

impl fmt::Display for IterationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iteration {}: +{} synthetic, train={}, BLEU fwd={}",
            self.iteration,
            self.synthetic_added,
            self.train_size,
            self.bleu_forward.display_score()
        )?;
        if let Some(r) = &self.bleu_reverse {
            write!(f, " rev={}", r.display_score())?;
        }
        Ok(())
    }
}

pub fn write_reports(reports: &[IterationReport]) -> String {
    reports.iter().map(|r| r.to_json_line() + "\n").collect()
}

pub fn read_reports(text: &str) -> Result<Vec<IterationReport>, PipelineError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            IterationReport::from_json_line(l).map_err(|message| PipelineError::Report {
                line: i + 1,
                message,
            })
        })
        .collect()
}

/// Synthetic pairs plus the count of sentences whose translation came out
/// empty.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBatch {
    pub corpus: ParallelCorpus,
    pub dropped: usize,
}

/// Pairs each monolingual sentence with its translation by `model`.
///
/// `model` translates out of the monolingual corpus's language; the result
/// is oriented the other way (translation as source, genuine sentence as
/// target), every pair tagged synthetic.
pub fn generate_synthetic<M: TranslationModel>(
    model: &M,
    mono: &MonolingualCorpus,
) -> Result<SyntheticBatch, PipelineError> {
    if model.direction().source != mono.language_tag {
        return Err(PipelineError::Orientation {
            model: model.direction().clone(),
            language: mono.language_tag.clone(),
        });
    }
    let mut corpus = ParallelCorpus::new(model.direction().reversed());
    let mut dropped = 0;
    for sentence in mono.sentences() {
        let translation = model.translate(sentence);
        if !corpus.push(&translation, sentence, Origin::Synthetic) {
            dropped += 1;
        }
    }
    Ok(SyntheticBatch { corpus, dropped })
}

/// Models and training data carried from one iteration to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineState<M> {
    pub forward: M,
    pub reverse: M,
    pub train: ParallelCorpus,
}

impl PipelineState<LexiconModel> {
    /// Trains both lexicon models on the original training pairs.
    pub fn bootstrap(train: ParallelCorpus) -> Result<Self, PipelineError> {
        let mut forward = LexiconModel::new(train.direction.clone());
        forward.train(&train)?;
        let reverse = LexiconModel::reversed_from(&train)?;
        Ok(Self {
            forward,
            reverse,
            train,
        })
    }
}

/// Held-out pairs with lookup sets for the leakage guard.
#[derive(Debug, Clone)]
pub struct HeldOut {
    corpus: ParallelCorpus,
    sources: HashSet<String>,
    targets: HashSet<String>,
}

impl HeldOut {
    pub fn new(corpus: ParallelCorpus) -> Self {
        let sources = corpus.iter().map(|p| p.source.clone()).collect();
        let targets = corpus.iter().map(|p| p.target.clone()).collect();
        Self {
            corpus,
            sources,
            targets,
        }
    }

    pub fn corpus(&self) -> &ParallelCorpus {
        &self.corpus
    }

    pub fn leaks(&self, pair: &SentencePair) -> bool {
        self.targets.contains(&pair.target) || self.sources.contains(&pair.source)
    }
}

/// BLEU of `model` translating `sources` against single references.
pub fn evaluate<M: TranslationModel>(
    model: &M,
    sources: &[&str],
    references: &[&str],
    config: &BleuConfig,
) -> Result<BleuReport, PipelineError> {
    let candidates: Vec<Vec<String>> = sources
        .iter()
        .map(|s| bleu::tokenize(&model.translate(s)))
        .collect();
    let refs: Vec<Vec<Vec<String>>> = references.iter().map(|r| vec![bleu::tokenize(r)]).collect();
    Ok(bleu::corpus_bleu(&candidates, &refs, config)?)
}

fn evaluate_both<M: TranslationModel>(
    state: &PipelineState<M>,
    held_out: &HeldOut,
    config: &PipelineConfig,
) -> Result<(BleuReport, Option<BleuReport>), PipelineError> {
    let sources: Vec<&str> = held_out.corpus.iter().map(|p| p.source.as_str()).collect();
    let targets: Vec<&str> = held_out.corpus.iter().map(|p| p.target.as_str()).collect();
    let forward = evaluate(&state.forward, &sources, &targets, &config.bleu)?;
    let reverse = if config.bidirectional {
        Some(evaluate(&state.reverse, &targets, &sources, &config.bleu)?)
    } else {
        None
    };
    Ok((forward, reverse))
}

/// One generate/mix/retrain/evaluate cycle.
pub fn run_iteration<M: TranslationModel>(
    state: &mut PipelineState<M>,
    mono_src: &MonolingualCorpus,
    mono_tgt: &MonolingualCorpus,
    held_out: &HeldOut,
    config: &PipelineConfig,
    iteration: usize,
    rng: &mut SeededRng,
) -> Result<IterationReport, PipelineError> {
    let frame = state.train.direction.clone();
    let mut candidates = generate_synthetic(&state.reverse, mono_tgt)?.corpus;
    if config.bidirectional {
        let forward_batch = generate_synthetic(&state.forward, mono_src)?.corpus.swapped();
        candidates = corpus::mix(&candidates, &forward_batch);
    }
    debug_assert_eq!(candidates.direction, frame);

    let mut leakage_dropped = 0;
    let mut kept: Vec<SentencePair> = Vec::with_capacity(candidates.len());
    for pair in candidates.iter() {
        if held_out.leaks(pair) {
            leakage_dropped += 1;
        } else {
            kept.push(pair.clone());
        }
    }
    if let Some(cap) = config.synthetic_cap {
        if kept.len() > cap {
            let chosen = shuffle::sample_sorted(kept.len(), cap, rng);
            kept = chosen.into_iter().map(|i| kept[i].clone()).collect();
        }
    }
    let fresh = ParallelCorpus::from_pairs(frame, kept);

    state.train = corpus::mix(&state.train, &fresh);
    state.forward.train(&fresh)?;
    state.reverse.train(&fresh.swapped())?;

    let (bleu_forward, bleu_reverse) = evaluate_both(state, held_out, config)?;
    Ok(IterationReport {
        iteration,
        synthetic_added: fresh.len(),
        train_size: state.train.len(),
        leakage_dropped,
        bleu_forward,
        bleu_reverse,
    })
}

/// File locations for a pipeline run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineInputs {
    pub source: PathBuf,
    pub target: PathBuf,
    pub mono_source: PathBuf,
    pub mono_target: PathBuf,
    /// Explicit held-out pair files. Without them the original corpus is
    /// split with `held_out_fraction` and `seed`.
    pub test: Option<(PathBuf, PathBuf)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub initial_train_size: usize,
    pub test_size: usize,
    /// Original pairs dropped at load time because a side was blank.
    pub dropped_on_load: usize,
    pub reports: Vec<IterationReport>,
    pub state: PipelineState<LexiconModel>,
}

/// Runs the whole loop from files, handing each report to `sink` as soon as
/// it is produced.
pub fn run_pipeline(
    inputs: &PipelineInputs,
    config: &PipelineConfig,
    mut sink: impl FnMut(&IterationReport) -> io::Result<()>,
) -> Result<PipelineRun, PipelineError> {
    let direction = config.direction();
    let loaded = corpus::load_parallel(&inputs.source, &inputs.target, direction.clone())?;
    let mut dropped_on_load = loaded.dropped;
    let (train, test) = match &inputs.test {
        Some((s, t)) => {
            let test = corpus::load_parallel(s, t, direction.clone())?;
            dropped_on_load += test.dropped;
            (loaded.corpus, test.corpus)
        }
        None => corpus::split(&loaded.corpus, config.held_out_fraction, config.seed)?,
    };
    if test.is_empty() {
        return Err(BleuError::EmptyCorpus.into());
    }
    let mono_src = corpus::load_monolingual(&inputs.mono_source, &config.source_lang)?;
    let mono_tgt = corpus::load_monolingual(&inputs.mono_target, &config.target_lang)?;

    let initial_train_size = train.len();
    let test_size = test.len();
    let held_out = HeldOut::new(test);
    let mut state = PipelineState::bootstrap(train)?;

    // The split consumes the seed's first stream; subsampling uses the next.
    let mut rng = shuffle::seeded_rng(config.seed);
    rng.jump();

    let mut reports = Vec::with_capacity(config.iterations);
    for index in 1..=config.iterations {
        let report = run_iteration(&mut state, &mono_src, &mono_tgt, &held_out, config, index, &mut rng)
            .map_err(|e| PipelineError::Iteration {
                index,
                source: Box::new(e),
            })?;
        sink(&report).map_err(PipelineError::Sink)?;
        reports.push(report);
    }
    Ok(PipelineRun {
        initial_train_size,
        test_size,
        dropped_on_load,
        reports,
        state,
    })
}
