//! Curation and evaluation toolkit for Kotlin code corpora.
//!
//! The crate covers the full desk-scale data pipeline for building a
//! high-quality Kotlin training corpus and measuring code-LLM output:
//!
//! - [`record`]: canonical file/repo data model, JSONL codec, dataset stats
//! - [`lex`]: minimal Kotlin-aware lexer for comment stripping and SLOC
//! - [`dedup`]: exact content-hash dedup and MinHash/LSH near-dedup
//! - [`filter`]: repo/file filters, content cleaning, PII redaction
//! - [`quality`]: pairwise LLM quality scoring, three-pass ranking,
//!   classifier distillation, top-k selection
//! - [`classifier`]: hashed character n-gram logistic classifier
//! - [`gateway`]: chat-completion backend contract, mock/replay backends,
//!   exercise translation
//! - [`eval`]: HumanEval-style generation post-processing, sandboxed
//!   execution, five-outcome metrics, completion exact-match
//! - [`trainmath`]: training-stabilization numerics (z-loss, dynamic beta2,
//!   warm-up, gradient clipping)
//! - [`pipeline`] / [`config`] / [`manifest`]: reproducible, manifest-producing
//!   CLI runs driven by a single seed
//!
//! Every stage is deterministic given the pipeline seed; all artifacts are
//! JSONL or JSON and chained together through per-stage manifests.

pub mod classifier;
pub mod config;
pub mod dedup;
pub mod error;
pub mod eval;
pub mod filter;
pub mod gateway;
pub mod jsonl;
pub mod lex;
pub mod manifest;
pub mod pipeline;
pub mod quality;
pub mod record;
pub mod trainmath;

pub use error::{Error, Result};
