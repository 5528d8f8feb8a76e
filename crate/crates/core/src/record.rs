//! Canonical data model for corpus files and repositories, plus dataset
//! descriptive statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// File extensions admitted into the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KotlinExt {
    #[serde(rename = "kt")]
    Kt,
    #[serde(rename = "kts")]
    Kts,
    #[serde(rename = "gradle.kts")]
    GradleKts,
}

impl KotlinExt {
    /// Classify a file path by its admitted extension, longest suffix first.
    pub fn from_path(path: &str) -> Option<KotlinExt> {
        if path.ends_with(".gradle.kts") {
            Some(KotlinExt::GradleKts)
        } else if path.ends_with(".kts") {
            Some(KotlinExt::Kts)
        } else if path.ends_with(".kt") {
            Some(KotlinExt::Kt)
        } else {
            None
        }
    }
}

/// A single source file with content, integrity hash, and repo linkage.
///
/// `content_hash` is always the lowercase hex SHA-256 of the content bytes;
/// [`FileRecord::new`] computes it and [`FileRecord::validate`] re-checks it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    pub path: String,
    pub repo_id: String,
    pub content: String,
    /// 64-hex SHA-256 digest of the raw content bytes. May be omitted in
    /// input streams; the JSONL reader fills it in.
    #[serde(default)]
    pub content_hash: String,
    #[serde(default)]
    pub size_bytes: u64,
    pub extension: KotlinExt,
}

/// Lowercase hex SHA-256 of a byte slice.
pub fn content_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl FileRecord {
    pub fn new(
        path: impl Into<String>,
        repo_id: impl Into<String>,
        content: impl Into<String>,
        extension: KotlinExt,
    ) -> FileRecord {
        let content = content.into();
        FileRecord {
            path: path.into(),
            repo_id: repo_id.into(),
            content_hash: content_digest(content.as_bytes()),
            size_bytes: content.len() as u64,
            content,
            extension,
        }
    }

    /// Re-derive hash and size after a content edit.
    pub fn with_content(mut self, content: String) -> FileRecord {
        self.content_hash = content_digest(content.as_bytes());
        self.size_bytes = content.len() as u64;
        self.content = content;
        self
    }

    /// Check the type invariants: non-empty path, matching hash and size.
    pub fn validate(&self) -> Result<()> {
        if self.path.is_empty() {
            return Err(Error::invalid("FileRecord", "path is empty"));
        }
        let computed = content_digest(self.content.as_bytes());
        if self.content_hash != computed {
            return Err(Error::HashMismatch {
                line: 0,
                path: self.path.clone(),
                stored: self.content_hash.clone(),
                computed,
            });
        }
        if self.size_bytes != self.content.len() as u64 {
            return Err(Error::invalid(
                "FileRecord",
                format!(
                    "{}: size_bytes {} does not match content length {}",
                    self.path,
                    self.size_bytes,
                    self.content.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Repository popularity and license metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepoMeta {
    pub repo_id: String,
    pub stars: u64,
    pub forks: u64,
    /// SPDX-style license id; absent when the hosting metadata had none.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub license_id: Option<String>,
    pub kotlin_file_count: u64,
}

impl RepoMeta {
    pub fn stars_plus_forks(&self) -> u64 {
        self.stars + self.forks
    }
}

/// Index of repositories keyed by `repo_id`.
pub type RepoIndex = BTreeMap<String, RepoMeta>;

/// Build a repo index, rejecting duplicate `repo_id`s.
pub fn build_repo_index(repos: impl IntoIterator<Item = RepoMeta>) -> Result<RepoIndex> {
    let mut index = RepoIndex::new();
    for repo in repos {
        let id = repo.repo_id.clone();
        if index.insert(id.clone(), repo).is_some() {
            return Err(Error::invalid(
                "RepoMeta",
                format!("duplicate repo_id {id}"),
            ));
        }
    }
    Ok(index)
}

/// Descriptive statistics for a record set.
///
/// Token counts are tokenizer-relative; line counts include blank lines.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub files: u64,
    pub repositories: u64,
    pub lines: u64,
    pub tokens: u64,
}

impl DatasetStats {
    /// Render as a report row, e.g. `25,000 files / 3,366 repos / ...`.
    pub fn render_row(&self) -> String {
        format!(
            "{} files / {} repos / {} lines / {} tokens",
            group_thousands(self.files),
            group_thousands(self.repositories),
            group_thousands(self.lines),
            group_thousands(self.tokens)
        )
    }
}

/// Decimal rendering with comma thousands separators.
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

/// Splits text into tokens for counting and shingling.
pub trait Tokenizer: Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;

    fn count(&self, text: &str) -> u64 {
        self.tokenize(text).len() as u64
    }
}

/// Whitespace-plus-punctuation splitter: identifier runs (alphanumeric and
/// `_`) form one token each, every other non-whitespace char is its own token.
#[derive(Debug, Clone, Copy, Default)]
pub struct SimpleTokenizer;

impl Tokenizer for SimpleTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        let mut tokens = Vec::new();
        let mut word = String::new();
        for ch in text.chars() {
            if ch.is_alphanumeric() || ch == '_' {
                word.push(ch);
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                if !ch.is_whitespace() {
                    tokens.push(ch.to_string());
                }
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
        tokens
    }
}

/// Aggregate descriptive statistics over a record set.
///
/// Every record's `repo_id` must resolve in `repo_index`. Aggregation is
/// order-independent: all fields are sums or distinct counts.
pub fn dataset_stats(
    records: &[FileRecord],
    repo_index: &RepoIndex,
    tokenizer: &dyn Tokenizer,
) -> Result<DatasetStats> {
    let mut repos = BTreeSet::new();
    let mut lines = 0u64;
    let mut tokens = 0u64;
    for record in records {
        if !repo_index.contains_key(&record.repo_id) {
            return Err(Error::UnknownRepo {
                path: record.path.clone(),
                repo_id: record.repo_id.clone(),
            });
        }
        repos.insert(record.repo_id.as_str());
        lines += record.content.lines().count() as u64;
        tokens += tokenizer.count(&record.content);
    }
    Ok(DatasetStats {
        files: records.len() as u64,
        repositories: repos.len() as u64,
        lines,
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn repo(id: &str) -> RepoMeta {
        RepoMeta {
            repo_id: id.to_string(),
            stars: 1,
            forks: 0,
            license_id: Some("Apache-2.0".to_string()),
            kotlin_file_count: 1,
        }
    }

    #[test]
    fn stats_of_empty_input_are_zero() {
        let stats = dataset_stats(&[], &RepoIndex::new(), &SimpleTokenizer).unwrap();
        assert_eq!(stats, DatasetStats::default());
    }

    #[test]
    fn stats_count_files_repos_lines_tokens() {
        let index = build_repo_index([repo("r1")]).unwrap();
        let rec = FileRecord::new("a.kt", "r1", "fun a\nval b\nx", KotlinExt::Kt);
        let stats = dataset_stats(&[rec], &index, &SimpleTokenizer).unwrap();
        assert_eq!(
            stats,
            DatasetStats {
                files: 1,
                repositories: 1,
                lines: 3,
                tokens: 5,
            }
        );
    }

    #[test]
    fn stats_reject_unknown_repo() {
        let rec = FileRecord::new("a.kt", "ghost", "x", KotlinExt::Kt);
        let err = dataset_stats(&[rec], &RepoIndex::new(), &SimpleTokenizer).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("a.kt") && msg.contains("ghost"), "{msg}");
    }

    #[test]
    fn stats_row_uses_thousands_separators() {
        let stats = DatasetStats {
            files: 25_000,
            repositories: 3_366,
            lines: 2_000_000,
            tokens: 22_000_000,
        };
        assert_eq!(
            stats.render_row(),
            "25,000 files / 3,366 repos / 2,000,000 lines / 22,000,000 tokens"
        );
    }

    #[test]
    fn stats_are_additive_for_disjoint_sets() {
        let index = build_repo_index([repo("r1"), repo("r2")]).unwrap();
        let a = vec![FileRecord::new("a.kt", "r1", "x y\nz", KotlinExt::Kt)];
        let b = vec![FileRecord::new("b.kt", "r2", "p\nq\nr", KotlinExt::Kt)];
        let both: Vec<_> = a.iter().chain(b.iter()).cloned().collect();
        let sa = dataset_stats(&a, &index, &SimpleTokenizer).unwrap();
        let sb = dataset_stats(&b, &index, &SimpleTokenizer).unwrap();
        let sab = dataset_stats(&both, &index, &SimpleTokenizer).unwrap();
        assert_eq!(sab.files, sa.files + sb.files);
        assert_eq!(sab.lines, sa.lines + sb.lines);
        assert_eq!(sab.tokens, sa.tokens + sb.tokens);
        assert!(sab.repositories <= sa.repositories + sb.repositories);
    }

    #[test]
    fn equal_contents_hash_equal() {
        let a = FileRecord::new("a.kt", "r1", "same", KotlinExt::Kt);
        let b = FileRecord::new("b/other.kt", "r2", "same", KotlinExt::Kt);
        assert_eq!(a.content_hash, b.content_hash);
        assert_eq!(a.content_hash.len(), 64);
    }

    #[test]
    fn duplicate_repo_ids_rejected() {
        assert!(build_repo_index([repo("r1"), repo("r1")]).is_err());
    }

    #[test]
    fn extension_from_path_prefers_longest_suffix() {
        assert_eq!(
            KotlinExt::from_path("build.gradle.kts"),
            Some(KotlinExt::GradleKts)
        );
        assert_eq!(KotlinExt::from_path("script.kts"), Some(KotlinExt::Kts));
        assert_eq!(KotlinExt::from_path("Main.kt"), Some(KotlinExt::Kt));
        assert_eq!(KotlinExt::from_path("readme.md"), None);
    }
}
