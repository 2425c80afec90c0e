//! Independent reference implementations and helpers shared by the
//! integration tests. Nothing here calls the code under test.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::PathBuf;

use lowres_mt::shuffle::{below, seeded_rng, SeededRng};

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn rng(seed: u64) -> SeededRng {
    seeded_rng(seed)
}

pub fn pick<'a, T>(rng: &mut SeededRng, items: &'a [T]) -> &'a T {
    &items[below(rng, items.len())]
}

/// Random whitespace-separated text: `1..=max_words` words of
/// `1..=max_len` characters from `alphabet`.
pub fn random_text(rng: &mut SeededRng, alphabet: &[char], max_words: usize, max_len: usize) -> String {
    let words = 1 + below(rng, max_words);
    (0..words)
        .map(|_| {
            let len = 1 + below(rng, max_len);
            (0..len).map(|_| *pick(rng, alphabet)).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// BPE
// ---------------------------------------------------------------------------

/// Textbook BPE: recount every adjacent pair from scratch after each merge.
/// Returns the merge sequence as `(left, right)` strings.
pub fn brute_force_bpe(corpus: &[String], vocab_size: usize, meta: char) -> Vec<(String, String)> {
    let mut words: Vec<Vec<String>> = Vec::new();
    for line in corpus {
        for w in line.split_whitespace() {
            words.push(std::iter::once(meta).chain(w.chars()).map(String::from).collect());
        }
    }
    let mut vocab: BTreeSet<String> = ["<unk>", "<s>", "</s>", "<pad>"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    vocab.insert(meta.to_string());
    for w in &words {
        vocab.extend(w.iter().cloned());
    }

    let mut merges = Vec::new();
    while vocab.len() < vocab_size {
        // Linear scan over a list of (pair, count) records.
        let mut counts: Vec<((String, String), u64)> = Vec::new();
        for w in &words {
            for i in 0..w.len().saturating_sub(1) {
                let key = (w[i].clone(), w[i + 1].clone());
                match counts.iter_mut().find(|(k, _)| *k == key) {
                    Some((_, c)) => *c += 1,
                    None => counts.push((key, 1)),
                }
            }
        }
        let mut best: Option<((String, String), u64)> = None;
        for (k, c) in counts {
            let better = match &best {
                None => true,
                Some((bk, bc)) => c > *bc || (c == *bc && k < *bk),
            };
            if better {
                best = Some((k, c));
            }
        }
        let Some(((l, r), c)) = best else { break };
        if c < 2 {
            break;
        }
        for w in &mut words {
            let mut out = Vec::new();
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == l && w[i + 1] == r {
                    out.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        vocab.insert(format!("{l}{r}"));
        merges.push((l, r));
    }
    merges
}

// ---------------------------------------------------------------------------
// BLEU
// ---------------------------------------------------------------------------

/// Every n-gram of `tokens` as an owned list, in order, duplicates kept.
pub fn ngram_list<T: Clone>(tokens: &[T], n: usize) -> Vec<Vec<T>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

fn occurrences<T: PartialEq>(list: &[Vec<T>], gram: &[T]) -> u64 {
    list.iter().filter(|g| g.as_slice() == gram).count() as u64
}

pub struct OracleBleu {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub c: u64,
    pub r: u64,
    pub bp: f64,
    pub score: f64,
}

/// Corpus BLEU with uniform weights and no smoothing, by enumerating n-gram
/// lists and counting with linear scans.
pub fn oracle_bleu<T: Clone + PartialEq>(cands: &[Vec<T>], refs: &[Vec<Vec<T>>], max_n: usize) -> OracleBleu {
    let mut matches = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let mut c = 0u64;
    let mut r = 0u64;
    for (cand, rs) in cands.iter().zip(refs) {
        c += cand.len() as u64;
        let mut best_len = rs[0].len();
        for x in rs {
            let d_new = x.len().abs_diff(cand.len());
            let d_old = best_len.abs_diff(cand.len());
            if d_new < d_old || (d_new == d_old && x.len() < best_len) {
                best_len = x.len();
            }
        }
        r += best_len as u64;
        for n in 1..=max_n {
            let grams = ngram_list(cand, n);
            totals[n - 1] += grams.len() as u64;
            let ref_lists: Vec<Vec<Vec<T>>> = rs.iter().map(|x| ngram_list(x, n)).collect();
            let mut seen: Vec<Vec<T>> = Vec::new();
            for g in &grams {
                if seen.contains(g) {
                    continue;
                }
                seen.push(g.clone());
                let in_cand = occurrences(&grams, g);
                let max_ref = ref_lists.iter().map(|l| occurrences(l, g)).max().unwrap_or(0);
                matches[n - 1] += in_cand.min(max_ref);
            }
        }
    }
    let bp = if c == 0 {
        0.0
    } else if c > r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let score = if matches.contains(&0) {
        0.0
    } else {
        let w = 1.0 / max_n as f64;
        let s: f64 = matches
            .iter()
            .zip(&totals)
            .map(|(&m, &t)| w * (m as f64 / t as f64).ln())
            .sum();
        bp * s.exp()
    };
    OracleBleu {
        matches,
        totals,
        c,
        r,
        bp,
        score,
    }
}

// ---------------------------------------------------------------------------
// Attention
// ---------------------------------------------------------------------------

/// Row-major `softmax(Q K^T / sqrt(d_k)) V` written directly from the
/// definition, with a per-row max shift.
pub fn reference_attention(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], d_k: usize) -> Vec<Vec<f64>> {
    let scale = (d_k as f64).sqrt();
    q.iter()
        .map(|qi| {
            let s: Vec<f64> = k
                .iter()
                .map(|kj| qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / scale)
                .collect();
            let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = s.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..v[0].len())
                .map(|c| e.iter().zip(v).map(|(p, vj)| p / z * vj[c]).sum())
                .collect()
        })
        .collect()
}
