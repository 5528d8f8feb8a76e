//! Pairwise LLM quality scoring, the three-pass ranking approximation,
//! top-fraction labeling, classifier distillation, and top-k selection.
//!
//! The order-debiased pair score combines both prompt orderings:
//!
//! ```text
//! s(f) = ((s(f,c)_A - s(f,c)_B) + (s(c,f)_B - s(c,f)_A)) / 2
//! ```
//!
//! where `s(x,y)_T` is the log-probability of choice token `T` when `x` is
//! presented first and `y` second. Any per-position additive bias cancels
//! algebraically, `s(f,f) = 0`, and `s(f,c) = -s(c,f)` hold exactly in
//! floating point.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{QualityClassifier, TrainOptions};
use crate::error::{Error, Result};
use crate::record::FileRecord;

/// A file as the quality pipeline sees it: an id and its content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityItem {
    pub id: String,
    pub content: String,
}

impl From<&FileRecord> for QualityItem {
    fn from(record: &FileRecord) -> QualityItem {
        QualityItem {
            id: record.path.clone(),
            content: record.content.clone(),
        }
    }
}

/// Answers one ordered pairwise query with log-probs for the choice tokens.
///
/// The first argument is presented as choice `A`, the second as choice `B`;
/// the return value is `(logprob_A, logprob_B)`.
pub trait PairwiseOracle: Sync {
    fn choice_logprobs(&self, first: &QualityItem, second: &QualityItem) -> Result<(f64, f64)>;

    /// Stable identity used for cache keying.
    fn oracle_id(&self) -> String {
        "oracle".to_string()
    }
}

/// One pairwise score in log-prob units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub file_id: String,
    pub anchor_id: String,
    pub value: f64,
}

/// Order-debiased pairwise score of `f` against anchor `c`.
///
/// Exactly two oracle calls per pair, one per ordering. Non-finite
/// log-probs surface as [`Error::DegradedData`].
pub fn pair_score(oracle: &dyn PairwiseOracle, f: &QualityItem, c: &QualityItem) -> Result<f64> {
    let tag_pair = |error: Error| -> Error {
        match error {
            Error::Transport(msg) => {
                Error::Transport(format!("pair ({}, {}): {msg}", f.id, c.id))
            }
            Error::RetriesExhausted { attempts, last } => Error::RetriesExhausted {
                attempts,
                last: format!("pair ({}, {}): {last}", f.id, c.id),
            },
            other => other,
        }
    };
    let (fc_a, fc_b) = oracle.choice_logprobs(f, c).map_err(tag_pair)?;
    let (cf_a, cf_b) = oracle.choice_logprobs(c, f).map_err(tag_pair)?;
    for (name, value) in [
        ("s(f,c)_A", fc_a),
        ("s(f,c)_B", fc_b),
        ("s(c,f)_A", cf_a),
        ("s(c,f)_B", cf_b),
    ] {
        if !value.is_finite() {
            return Err(Error::DegradedData(format!(
                "non-finite log-prob {name} for pair ({}, {})",
                f.id, c.id
            )));
        }
    }
    Ok(0.5 * ((fc_a - fc_b) + (cf_b - cf_a)))
}

/// Bookkeeping for the three-pass ranking procedure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingState {
    /// Anchor id per pass: seeded-random, then the two successive argmaxes.
    pub anchors: [String; 3],
    /// Per-pass scores, keyed by file id.
    pub pass_scores: [BTreeMap<String, f64>; 3],
    /// Mean of pass 2 and pass 3 per file; pass 1 is omitted.
    pub final_scores: BTreeMap<String, f64>,
}

/// Argmax under the total order (score desc, id asc).
fn argmax_id(scores: &BTreeMap<String, f64>) -> String {
    scores
        .iter()
        .max_by(|(id_a, va), (id_b, vb)| {
            va.partial_cmp(vb)
                .expect("scores are finite")
                .then_with(|| id_b.cmp(id_a))
        })
        .map(|(id, _)| id.clone())
        .expect("scores non-empty")
}

/// Rank `sample` with three anchor passes.
///
/// Pass 1 scores every file against a seeded-random anchor; pass 2 against
/// the pass-1 argmax; pass 3 against the pass-2 argmax. Final scores are the
/// per-file mean of passes 2 and 3.
pub fn three_pass_rank(
    oracle: &dyn PairwiseOracle,
    sample: &[QualityItem],
    seed: u64,
) -> Result<RankingState> {
    if sample.is_empty() {
        return Err(Error::EmptyInput("three_pass_rank sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first_anchor = sample[rng.random_range(0..sample.len())].id.clone();

    let by_id: BTreeMap<&str, &QualityItem> =
        sample.iter().map(|item| (item.id.as_str(), item)).collect();
    if by_id.len() != sample.len() {
        return Err(Error::invalid("sample", "file ids must be unique"));
    }

    let mut anchors: [String; 3] = [first_anchor, String::new(), String::new()];
    let mut pass_scores: [BTreeMap<String, f64>; 3] = Default::default();
    for pass in 0..3 {
        let anchor = by_id[anchors[pass].as_str()];
        let mut scores = BTreeMap::new();
        for item in sample {
            scores.insert(item.id.clone(), pair_score(oracle, item, anchor)?);
        }
        if pass < 2 {
            anchors[pass + 1] = argmax_id(&scores);
        }
        pass_scores[pass] = scores;
    }

    let final_scores = pass_scores[1]
        .iter()
        .map(|(id, s2)| (id.clone(), 0.5 * (s2 + pass_scores[2][id])))
        .collect();
    Ok(RankingState {
        anchors,
        pass_scores,
        final_scores,
    })
}

/// One row of the score-table artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub file_id: String,
    pub pass: u8,
    pub anchor_id: String,
    pub value: f64,
}

impl RankingState {
    pub fn score_rows(&self) -> Vec<ScoreRow> {
        let mut rows = Vec::new();
        for pass in 0..3 {
            for (file_id, value) in &self.pass_scores[pass] {
                rows.push(ScoreRow {
                    file_id: file_id.clone(),
                    pass: pass as u8 + 1,
                    anchor_id: self.anchors[pass].clone(),
                    value: *value,
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

/// A binary quality label for one file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityLabel {
    pub file_id: String,
    pub label: Label,
}

/// Mark the top `ceil(fraction * N)` files by final score as positive.
/// Ties break by (score desc, id asc), so equal scores at the cut favour
/// the smaller file id.
pub fn label_top_fraction(
    final_scores: &BTreeMap<String, f64>,
    fraction: f64,
) -> Result<Vec<QualityLabel>> {
    if final_scores.is_empty() {
        return Err(Error::EmptyInput("final_scores"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid("fraction", "must be in (0, 1]"));
    }
    let mut ordered: Vec<(&String, &f64)> = final_scores.iter().collect();
    ordered.sort_by(|(id_a, va), (id_b, vb)| {
        vb.partial_cmp(va)
            .expect("scores are finite")
            .then_with(|| id_a.cmp(id_b))
    });
    let positives = (fraction * final_scores.len() as f64).ceil() as usize;
    Ok(ordered
        .into_iter()
        .enumerate()
        .map(|(rank, (id, _))| QualityLabel {
            file_id: id.clone(),
            label: if rank < positives {
                Label::Positive
            } else {
                Label::Negative
            },
        })
        .collect())
}

/// Distill labels into the baseline classifier. Wrapper that joins items to
/// labels and trains for the configured epochs (default three).
pub fn train_quality_classifier(
    items: &[QualityItem],
    labels: &[QualityLabel],
    options: TrainOptions,
) -> Result<QualityClassifier> {
    let by_id: BTreeMap<&str, &QualityItem> =
        items.iter().map(|item| (item.id.as_str(), item)).collect();
    let mut examples: Vec<(&str, bool)> = Vec::with_capacity(labels.len());
    for label in labels {
        let item = by_id.get(label.file_id.as_str()).ok_or_else(|| {
            Error::invalid("labels", format!("label for unknown file {}", label.file_id))
        })?;
        examples.push((item.content.as_str(), label.label == Label::Positive));
    }
    QualityClassifier::train(&examples, options)
}

/// Indices of the `k` records with the highest positive-class log-probability
/// (ties by file id). Returns everything when `k >= N`.
pub fn select_top_k(
    records: &[FileRecord],
    classifier: &QualityClassifier,
    k: usize,
) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::invalid("k", "must be >= 1"));
    }
    use rayon::prelude::*;
    let mut scored: Vec<(usize, f64)> = records
        .par_iter()
        .enumerate()
        .map(|(idx, record)| (idx, classifier.score(&record.content)))
        .collect();
    scored.sort_by(|(ia, sa), (ib, sb)| {
        sb.partial_cmp(sa)
            .expect("scores are finite")
            .then_with(|| records[*ia].path.cmp(&records[*ib].path))
    });
    scored.truncate(k);
    Ok(scored.into_iter().map(|(idx, _)| idx).collect())
}

/// A persisted pairwise response: the resumable checkpoint unit.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheRow {
    oracle_id: String,
    first_id: String,
    second_id: String,
    logprob_a: f64,
    logprob_b: f64,
}

/// Caching oracle wrapper keyed by `(oracle_id, ordered pair)`.
///
/// Every miss is appended to the cache file (when configured) before the
/// value is returned, so an interrupted pass resumes without repeating
/// completed oracle calls.
pub struct CachedOracle<'a> {
    inner: &'a dyn PairwiseOracle,
    state: Mutex<CacheState>,
}

struct CacheState {
    entries: BTreeMap<(String, String), (f64, f64)>,
    log: Option<(PathBuf, File)>,
}

impl<'a> CachedOracle<'a> {
    pub fn new(inner: &'a dyn PairwiseOracle) -> CachedOracle<'a> {
        CachedOracle {
            inner,
            state: Mutex::new(CacheState {
                entries: BTreeMap::new(),
                log: None,
            }),
        }
    }

    /// Attach a persistent cache file, loading any rows already in it that
    /// match the wrapped oracle's id.
    pub fn with_log(inner: &'a dyn PairwiseOracle, path: &Path) -> Result<CachedOracle<'a>> {
        let mut entries = BTreeMap::new();
        if path.exists() {
            let oracle_id = inner.oracle_id();
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: CacheRow = serde_json::from_str(&line)?;
                if row.oracle_id == oracle_id {
                    entries.insert(
                        (row.first_id, row.second_id),
                        (row.logprob_a, row.logprob_b),
                    );
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CachedOracle {
            inner,
            state: Mutex::new(CacheState {
                entries,
                log: Some((path.to_path_buf(), file)),
            }),
        })
    }

    pub fn cached_pairs(&self) -> usize {
        self.state.lock().expect("cache lock").entries.len()
    }
}

impl PairwiseOracle for CachedOracle<'_> {
    fn choice_logprobs(&self, first: &QualityItem, second: &QualityItem) -> Result<(f64, f64)> {
        let key = (first.id.clone(), second.id.clone());
        {
            let state = self.state.lock().expect("cache lock");
            if let Some(&hit) = state.entries.get(&key) {
                return Ok(hit);
            }
        }
        let value = self.inner.choice_logprobs(first, second)?;
        let mut state = self.state.lock().expect("cache lock");
        if let Some((_, file)) = state.log.as_mut() {
            let row = CacheRow {
                oracle_id: self.inner.oracle_id(),
                first_id: key.0.clone(),
                second_id: key.1.clone(),
                logprob_a: value.0,
                logprob_b: value.1,
            };
            writeln!(file, "{}", serde_json::to_string(&row)?)?;
        }
        state.entries.insert(key, value);
        Ok(value)
    }

    fn oracle_id(&self) -> String {
        self.inner.oracle_id()
    }
}
