//! Desk-scale machine-translation toolkit for low-resource language pairs.
//!
//! The crate bundles the pieces of a backtranslation workflow:
//!
//! - [`corpus`]: loading, normalizing, splitting and mixing parallel and
//!   monolingual text.
//! - [`subword`]: a character-level BPE trainer, encoder and decoder with
//!   unigram log-probability scoring.
//! - [`bleu`]: corpus and sentence BLEU with exact clipped precisions.
//! - [`attention`]: reference scaled dot-product attention and a tiled
//!   online-softmax kernel checked against it.
//! - [`translator`]: the translation-model contract and a co-occurrence
//!   lexicon model that implements it.
//! - [`pipeline`]: the iterative backtranslation loop with per-iteration
//!   BLEU reports.
//! - [`cli`]: the `lowres-mt` command line front end.

pub mod attention;
pub mod bleu;
pub mod cli;
pub mod corpus;
pub mod pipeline;
pub mod shuffle;
pub mod subword;
pub mod translator;
