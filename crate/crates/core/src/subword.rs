//! Character-level BPE subword model.
//!
//! Training starts from the distinct characters of the corpus, with the
//! word-boundary marker prepended to every word, and greedily merges the most
//! frequent adjacent pair until the vocabulary is full or no pair occurs
//! twice. Ties go to the lexicographically smallest `(left, right)` pair.
//!
//! Each final token also carries a unigram log-probability: the log of its
//! relative frequency in the fully merged training corpus. Tokens that never
//! survive to the end of training get probability zero (`-inf`).

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const PAD: &str = "<pad>";
pub const SPECIALS: [&str; 4] = [UNK, BOS, EOS, PAD];

pub const UNK_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const PAD_ID: u32 = 3;

pub const DEFAULT_VOCAB_SIZE: usize = 16_000;
pub const DEFAULT_META: char = '\u{2581}';

const HEADER_MAGIC: &str = "bpe-model v1";
const MERGES_MARKER: &str = "#merges";

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error("vocab_size {vocab_size} is smaller than the {required} base symbols and specials")]
    VocabTooSmall { vocab_size: usize, required: usize },
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("invalid token id {id} at position {position}")]
    InvalidId { position: usize, id: u32 },
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn parse_err(line: usize, message: impl Into<String>) -> SubwordError {
    SubwordError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MergeRule {
    pub left: String,
    pub right: String,
    pub rank: usize,
}

impl MergeRule {
    pub fn output(&self) -> String {
        let mut s = String::with_capacity(self.left.len() + self.right.len());
        s.push_str(&self.left);
        s.push_str(&self.right);
        s
    }
}

/// Bijective token/id table. Ids 0-3 are always the specials
/// `<unk> <s> </s> <pad>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    fn with_specials() -> Self {
        let mut v = Self {
            id_to_token: Vec::new(),
            token_to_id: HashMap::new(),
        };
        for s in SPECIALS {
            v.insert(s);
        }
        v
    }

    /// Returns the id of `token`, inserting it if absent.
    fn insert(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.token_to_id.get(token) {
            return id;
        }
        let id = self.id_to_token.len() as u32;
        self.id_to_token.push(token.to_owned());
        self.token_to_id.insert(token.to_owned(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: u32) -> bool {
        id < SPECIALS.len() as u32
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }
}

/// Token ids plus an attention mask (1 for real tokens, 0 for trailing
/// padding).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
}

impl TokenSequence {
    pub fn from_ids(ids: Vec<u32>) -> Self {
        let attention_mask = vec![1; ids.len()];
        Self {
            ids,
            attention_mask,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Right-pads with `<pad>` up to `len`; longer sequences are untouched.
    pub fn pad_to(&mut self, len: usize) {
        while self.ids.len() < len {
            self.ids.push(PAD_ID);
            self.attention_mask.push(0);
        }
    }
}

/// Result of scoring a token sequence under the unigram model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnigramScore {
    pub logprob: f64,
    /// Positions that carried a special token and contributed nothing.
    pub undefined: usize,
}

#[derive(Debug, Clone)]
pub struct SubwordModel {
    vocab: Vocabulary,
    merges: Vec<MergeRule>,
    merge_ranks: HashMap<(String, String), usize>,
    /// Indexed by token id; NaN for the specials.
    unigram_logprob: Vec<f64>,
    meta: char,
}

impl PartialEq for SubwordModel {
    fn eq(&self, other: &Self) -> bool {
        self.vocab == other.vocab
            && self.merges == other.merges
            && self.meta == other.meta
            && self.unigram_logprob.len() == other.unigram_logprob.len()
            && self
                .unigram_logprob
                .iter()
                .zip(&other.unigram_logprob)
                .all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()))
    }
}

impl SubwordModel {
    fn from_parts(
        vocab: Vocabulary,
        merges: Vec<MergeRule>,
        unigram_logprob: Vec<f64>,
        meta: char,
    ) -> Self {
        let mut merge_ranks = HashMap::with_capacity(merges.len());
        for m in &merges {
            merge_ranks
                .entry((m.left.clone(), m.right.clone()))
                .or_insert(m.rank);
        }
        Self {
            vocab,
            merges,
            merge_ranks,
            unigram_logprob,
            meta,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn meta_symbol(&self) -> char {
        self.meta
    }

    /// Natural-log unigram probability; `None` for specials and unknown ids.
    pub fn unigram_logprob(&self, id: u32) -> Option<f64> {
        if Vocabulary::is_special(id) {
            return None;
        }
        self.unigram_logprob.get(id as usize).copied()
    }

    /// Single-character tokens of the vocabulary other than the marker.
    pub fn base_characters(&self) -> Vec<char> {
        self.vocab
            .tokens()
            .iter()
            .skip(SPECIALS.len())
            .filter_map(|t| {
                let mut it = t.chars();
                match (it.next(), it.next()) {
                    (Some(c), None) if c != self.meta => Some(c),
                    _ => None,
                }
            })
            .collect()
    }

    /// Splits one word into subword strings by applying merges in rank
    /// order. The word must not contain spaces.
    fn segment_word(&self, word: &str) -> Vec<String> {
        let mut symbols: Vec<String> = std::iter::once(self.meta)
            .chain(word.chars())
            .map(String::from)
            .collect();
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_ranks.get(&(w[0].clone(), w[1].clone())))
                .min()
                .copied();
            let Some(rank) = best else { break };
            let rule = &self.merges[rank];
            symbols = merge_symbols(symbols, &rule.left, &rule.right);
        }
        symbols
    }

    pub fn encode(&self, text: &str, add_bos_eos: bool) -> TokenSequence {
        let mut ids = Vec::new();
        if add_bos_eos {
            ids.push(BOS_ID);
        }
        for word in text.split(' ').filter(|w| !w.is_empty()) {
            for piece in self.segment_word(word) {
                ids.push(self.vocab.id(&piece).unwrap_or(UNK_ID));
            }
        }
        if add_bos_eos {
            ids.push(EOS_ID);
        }
        TokenSequence::from_ids(ids)
    }

    /// Token strings for `text`, mostly for display and debugging.
    pub fn encode_pieces(&self, text: &str) -> Vec<String> {
        text.split(' ')
            .filter(|w| !w.is_empty())
            .flat_map(|w| self.segment_word(w))
            .collect()
    }

    pub fn decode(&self, tokens: &TokenSequence) -> Result<String, SubwordError> {
        self.decode_ids(&tokens.ids)
    }

    pub fn decode_ids(&self, ids: &[u32]) -> Result<String, SubwordError> {
        let mut joined = String::new();
        for (position, &id) in ids.iter().enumerate() {
            let token = self
                .vocab
                .token(id)
                .ok_or(SubwordError::InvalidId { position, id })?;
            if !Vocabulary::is_special(id) {
                joined.push_str(token);
            }
        }
        let spaced = joined.replace(self.meta, " ");
        Ok(spaced.strip_prefix(' ').unwrap_or(&spaced).to_owned())
    }

    /// log P(S) as the sum of per-token unigram log-probabilities.
    /// Masked-out positions are skipped; specials add 0 and are counted.
    pub fn unigram_logprob_of(&self, tokens: &TokenSequence) -> UnigramScore {
        let mut score = UnigramScore {
            logprob: 0.0,
            undefined: 0,
        };
        for (&id, &mask) in tokens.ids.iter().zip(&tokens.attention_mask) {
            if mask == 0 {
                continue;
            }
            match self.unigram_logprob(id) {
                Some(lp) => score.logprob += lp,
                None => score.undefined += 1,
            }
        }
        score
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{HEADER_MAGIC} vocab={} meta={}",
            self.vocab.len(),
            self.meta
        );
        for (id, token) in self.vocab.tokens().iter().enumerate() {
            if Vocabulary::is_special(id as u32) {
                let _ = writeln!(out, "{token}\tnan");
            } else {
                let _ = writeln!(out, "{token}\t{}", format_logprob(self.unigram_logprob[id]));
            }
        }
        out.push_str(MERGES_MARKER);
        out.push('\n');
        for m in &self.merges {
            let _ = writeln!(out, "{}\t{}", m.left, m.right);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SubwordError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

        let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
        let rest = header
            .strip_prefix(HEADER_MAGIC)
            .and_then(|r| r.strip_prefix(" vocab="))
            .ok_or_else(|| parse_err(1, format!("expected `{HEADER_MAGIC} vocab=<n> meta=<char>`")))?;
        let (count, meta) = rest
            .split_once(" meta=")
            .ok_or_else(|| parse_err(1, "missing meta="))?;
        let count: usize = count
            .parse()
            .map_err(|_| parse_err(1, format!("bad vocab count `{count}`")))?;
        let mut meta_chars = meta.chars();
        let meta = match (meta_chars.next(), meta_chars.next()) {
            (Some(c), None) => c,
            _ => return Err(parse_err(1, format!("meta must be one character, got `{meta}`"))),
        };
        if count < SPECIALS.len() {
            return Err(parse_err(1, "vocabulary smaller than the special tokens"));
        }

        let mut vocab = Vocabulary {
            id_to_token: Vec::with_capacity(count),
            token_to_id: HashMap::with_capacity(count),
        };
        let mut logprobs = Vec::with_capacity(count);
        for id in 0..count {
            let (line_no, line) = lines
                .next()
                .ok_or_else(|| parse_err(id + 2, "unexpected end of token list"))?;
            let (token, lp) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err(line_no, "expected `token<TAB>logprob`"))?;
            if id < SPECIALS.len() {
                if token != SPECIALS[id] {
                    return Err(parse_err(
                        line_no,
                        format!("expected special `{}`, got `{token}`", SPECIALS[id]),
                    ));
                }
                if lp != "nan" {
                    return Err(parse_err(line_no, "special tokens carry logprob `nan`"));
                }
                logprobs.push(f64::NAN);
            } else {
                let value: f64 = lp
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad logprob `{lp}`")))?;
                if value.is_nan() || value > 0.0 {
                    return Err(parse_err(line_no, format!("logprob out of range: {lp}")));
                }
                logprobs.push(value);
            }
            if vocab.token_to_id.contains_key(token) {
                return Err(parse_err(line_no, format!("duplicate token `{token}`")));
            }
            vocab.insert(token);
        }

        match lines.next() {
            Some((_, MERGES_MARKER)) => {}
            Some((n, other)) => {
                return Err(parse_err(n, format!("expected `{MERGES_MARKER}`, got `{other}`")))
            }
            None => return Err(parse_err(count + 2, format!("missing `{MERGES_MARKER}`"))),
        }

        let mut merges = Vec::new();
        for (line_no, line) in lines {
            let (left, right) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(line_no, "expected `left<TAB>right`"))?;
            let rule = MergeRule {
                left: left.to_owned(),
                right: right.to_owned(),
                rank: merges.len(),
            };
            for part in [left, right] {
                if vocab.id(part).is_none() {
                    return Err(parse_err(line_no, format!("merge operand `{part}` not in vocabulary")));
                }
            }
            if vocab.id(&rule.output()).is_none() {
                return Err(parse_err(
                    line_no,
                    format!("merge output `{}` not in vocabulary", rule.output()),
                ));
            }
            merges.push(rule);
        }
        Ok(Self::from_parts(vocab, merges, logprobs, meta))
    }
}

fn format_logprob(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

pub fn save_model(model: &SubwordModel, path: &Path) -> Result<(), SubwordError> {
    fs::write(path, model.to_text()).map_err(|source| SubwordError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<SubwordModel, SubwordError> {
    let text = fs::read_to_string(path).map_err(|source| SubwordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    SubwordModel::from_text(&text)
}

/// Merges every non-overlapping `(left, right)` occurrence, scanning left to
/// right.
fn merge_symbols(symbols: Vec<String>, left: &str, right: &str) -> Vec<String> {
    let mut out = Vec::with_capacity(symbols.len());
    let mut it = symbols.into_iter().peekable();
    while let Some(sym) = it.next() {
        if sym == left && it.peek().is_some_and(|n| n == right) {
            let next = it.next().unwrap_or_default();
            out.push(sym + &next);
        } else {
            out.push(sym);
        }
    }
    out
}

/// Adjacent-pair counts weighted by word frequency. Every adjacent position
/// counts, so a word `a a a` contributes two `(a, a)` pairs.
pub fn pair_counts<'a, I, S>(word_frequencies: I) -> BTreeMap<(String, String), u64>
where
    I: IntoIterator<Item = (&'a [S], u64)>,
    S: AsRef<str> + 'a,
{
    let mut counts = BTreeMap::new();
    for (symbols, freq) in word_frequencies {
        for w in symbols.windows(2) {
            *counts
                .entry((w[0].as_ref().to_owned(), w[1].as_ref().to_owned()))
                .or_insert(0) += freq;
        }
    }
    counts
}

/// Distinct words of the corpus with their frequencies, split on whitespace.
fn word_frequencies<S: AsRef<str>>(corpus: &[S]) -> BTreeMap<&str, u64> {
    let mut freqs = BTreeMap::new();
    for line in corpus {
        for word in line.as_ref().split_whitespace() {
            *freqs.entry(word).or_insert(0) += 1;
        }
    }
    freqs
}

type Pair = (u32, u32);

/// Incremental trainer state. Symbols are interned as `u32` ids that double
/// as vocabulary ids.
struct Trainer {
    vocab: Vocabulary,
    words: Vec<Vec<u32>>,
    freqs: Vec<u64>,
    counts: HashMap<Pair, u64>,
    occurs_in: HashMap<Pair, BTreeSet<usize>>,
    heap: BinaryHeap<(u64, Reverse<(String, String)>, Pair)>,
}

impl Trainer {
    fn push_heap(&mut self, pair: Pair) {
        let count = self.counts.get(&pair).copied().unwrap_or(0);
        if count == 0 {
            return;
        }
        let key = (
            self.vocab.id_to_token[pair.0 as usize].clone(),
            self.vocab.id_to_token[pair.1 as usize].clone(),
        );
        self.heap.push((count, Reverse(key), pair));
    }

    /// Highest-count pair, ties to the smallest token strings. Entries whose
    /// count no longer matches are stale and skipped.
    fn pop_best(&mut self) -> Option<(Pair, u64)> {
        while let Some((count, _, pair)) = self.heap.pop() {
            if self.counts.get(&pair).copied() == Some(count) {
                return Some((pair, count));
            }
        }
        None
    }

    fn adjust(&mut self, word: &[u32], word_idx: usize, freq: u64, add: bool, touched: &mut BTreeSet<Pair>) {
        for w in word.windows(2) {
            let pair = (w[0], w[1]);
            let c = self.counts.entry(pair).or_insert(0);
            if add {
                *c += freq;
                self.occurs_in.entry(pair).or_default().insert(word_idx);
            } else {
                *c -= freq;
            }
            touched.insert(pair);
        }
    }

    fn apply_merge(&mut self, pair: Pair, merged: u32) {
        let word_ids: Vec<usize> = self
            .occurs_in
            .remove(&pair)
            .map(|s| s.into_iter().collect())
            .unwrap_or_default();
        let mut touched = BTreeSet::new();
        for idx in word_ids {
            let old = std::mem::take(&mut self.words[idx]);
            if !old.windows(2).any(|w| (w[0], w[1]) == pair) {
                self.words[idx] = old;
                continue;
            }
            let freq = self.freqs[idx];
            self.adjust(&old, idx, freq, false, &mut touched);
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    new.push(merged);
                    i += 2;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            self.adjust(&new, idx, freq, true, &mut touched);
            self.words[idx] = new;
        }
        for p in touched {
            if self.counts.get(&p) == Some(&0) {
                self.counts.remove(&p);
            }
            self.push_heap(p);
        }
    }
}

/// Trains a BPE model on whitespace-separated text.
pub fn train_bpe<S: AsRef<str>>(
    corpus: &[S],
    vocab_size: usize,
    meta: char,
) -> Result<SubwordModel, SubwordError> {
    let word_freqs = word_frequencies(corpus);
    if word_freqs.is_empty() {
        return Err(SubwordError::EmptyCorpus);
    }

    let mut alphabet = BTreeSet::new();
    alphabet.insert(meta);
    for word in word_freqs.keys() {
        alphabet.extend(word.chars());
    }
    let required = alphabet.len() + SPECIALS.len();
    if vocab_size < required {
        return Err(SubwordError::VocabTooSmall {
            vocab_size,
            required,
        });
    }

    let mut vocab = Vocabulary::with_specials();
    let mut buf = [0u8; 4];
    for &c in &alphabet {
        vocab.insert(c.encode_utf8(&mut buf));
    }

    let mut words = Vec::with_capacity(word_freqs.len());
    let mut freqs = Vec::with_capacity(word_freqs.len());
    for (word, &freq) in &word_freqs {
        let symbols: Vec<u32> = std::iter::once(meta)
            .chain(word.chars())
            .map(|c| vocab.id(c.encode_utf8(&mut buf)).unwrap_or(UNK_ID))
            .collect();
        words.push(symbols);
        freqs.push(freq);
    }

    let mut trainer = Trainer {
        vocab,
        words,
        freqs,
        counts: HashMap::new(),
        occurs_in: HashMap::new(),
        heap: BinaryHeap::new(),
    };
    let mut touched = BTreeSet::new();
    for idx in 0..trainer.words.len() {
        let word = std::mem::take(&mut trainer.words[idx]);
        let freq = trainer.freqs[idx];
        trainer.adjust(&word, idx, freq, true, &mut touched);
        trainer.words[idx] = word;
    }
    for p in touched {
        trainer.push_heap(p);
    }

    let mut merges = Vec::new();
    while trainer.vocab.len() < vocab_size {
        let Some((pair, count)) = trainer.pop_best() else { break };
        if count < 2 {
            break;
        }
        let left = trainer.vocab.id_to_token[pair.0 as usize].clone();
        let right = trainer.vocab.id_to_token[pair.1 as usize].clone();
        let merged = trainer.vocab.insert(&format!("{left}{right}"));
        merges.push(MergeRule {
            left,
            right,
            rank: merges.len(),
        });
        trainer.apply_merge(pair, merged);
    }

    let mut token_counts = vec![0u64; trainer.vocab.len()];
    for (word, &freq) in trainer.words.iter().zip(&trainer.freqs) {
        for &id in word {
            token_counts[id as usize] += freq;
        }
    }
    let total: u64 = token_counts.iter().sum();
    let logprobs = token_counts
        .iter()
        .enumerate()
        .map(|(id, &c)| {
            if Vocabulary::is_special(id as u32) {
                f64::NAN
            } else {
                (c as f64 / total as f64).ln()
            }
        })
        .collect();

    Ok(SubwordModel::from_parts(trainer.vocab, merges, logprobs, meta))
}
