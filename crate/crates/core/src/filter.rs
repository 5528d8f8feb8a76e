//! Repository- and file-level filters, probabilistic content cleaning, and a
//! plumbing-grade regex PII redactor.
//!
//! All operations are pure per record. Cleaning randomness derives from
//! `(policy.seed, content_hash)`, so results are independent of corpus order
//! and safe to compute in parallel.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lex::{classify_line, count_sloc, LineClass};
use crate::record::{FileRecord, RepoMeta};

/// How files containing non-ASCII bytes are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonAsciiPolicy {
    /// Drop the whole file; characters are never stripped in place.
    DropFile,
}

/// Thresholds and knobs for the filtering stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterPolicy {
    #[serde(default = "default_min_stars_plus_forks")]
    pub min_stars_plus_forks: u64,
    #[serde(default = "default_min_kotlin_files")]
    pub min_kotlin_files: u64,
    #[serde(default = "default_min_sloc")]
    pub min_sloc: usize,
    #[serde(default = "default_import_keep_probability")]
    pub import_keep_probability: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_non_ascii_policy")]
    pub non_ascii_policy: NonAsciiPolicy,
    #[serde(default = "default_license_allowlist")]
    pub license_allowlist: BTreeSet<String>,
}

fn default_min_stars_plus_forks() -> u64 {
    6
}
fn default_min_kotlin_files() -> u64 {
    5
}
fn default_min_sloc() -> usize {
    20
}
fn default_import_keep_probability() -> f64 {
    0.5
}
fn default_non_ascii_policy() -> NonAsciiPolicy {
    NonAsciiPolicy::DropFile
}
fn default_license_allowlist() -> BTreeSet<String> {
    [
        "Apache-2.0",
        "MIT",
        "BSD-2-Clause",
        "BSD-3-Clause",
        "ISC",
        "Unlicense",
        "0BSD",
    ]
    .into_iter()
    .map(str::to_string)
    .collect()
}

impl Default for FilterPolicy {
    fn default() -> Self {
        FilterPolicy {
            min_stars_plus_forks: default_min_stars_plus_forks(),
            min_kotlin_files: default_min_kotlin_files(),
            min_sloc: default_min_sloc(),
            import_keep_probability: default_import_keep_probability(),
            seed: 0,
            non_ascii_policy: default_non_ascii_policy(),
            license_allowlist: default_license_allowlist(),
        }
    }
}

impl FilterPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.import_keep_probability) {
            return Err(Error::invalid(
                "FilterPolicy",
                "import_keep_probability must be in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// One rejection entry in the audit artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    /// File path, or repo_id for repo-level rejections.
    pub path: String,
    pub stage: String,
    pub reason: String,
}

/// Why a repo is rejected, or `None` to keep it.
pub fn repo_rejection(repo: &RepoMeta, policy: &FilterPolicy) -> Option<String> {
    if repo.stars_plus_forks() < policy.min_stars_plus_forks {
        return Some(format!(
            "stars_plus_forks {} below {}",
            repo.stars_plus_forks(),
            policy.min_stars_plus_forks
        ));
    }
    if repo.kotlin_file_count < policy.min_kotlin_files {
        return Some(format!(
            "kotlin_file_count {} below {}",
            repo.kotlin_file_count, policy.min_kotlin_files
        ));
    }
    match &repo.license_id {
        None => Some("license absent".to_string()),
        Some(license) if !policy.license_allowlist.contains(license) => {
            Some(format!("license {license} not in allowlist"))
        }
        Some(_) => None,
    }
}

/// Keep repos that clear the popularity, file-count, and license gates.
pub fn filter_repos(repos: &[RepoMeta], policy: &FilterPolicy) -> (Vec<RepoMeta>, Vec<AuditRecord>) {
    let mut kept = Vec::new();
    let mut audit = Vec::new();
    for repo in repos {
        match repo_rejection(repo, policy) {
            None => kept.push(repo.clone()),
            Some(reason) => audit.push(AuditRecord {
                path: repo.repo_id.clone(),
                stage: "filter_repos".to_string(),
                reason,
            }),
        }
    }
    (kept, audit)
}

/// Why a file is rejected, or `None` to keep it.
pub fn file_rejection(record: &FileRecord, policy: &FilterPolicy) -> Option<String> {
    let sloc = count_sloc(&record.content);
    if sloc < policy.min_sloc {
        return Some(format!("sloc {sloc} below {}", policy.min_sloc));
    }
    match policy.non_ascii_policy {
        NonAsciiPolicy::DropFile => {
            if !record.content.is_ascii() {
                return Some("non-ascii content".to_string());
            }
        }
    }
    None
}

/// Keep files that clear the SLOC and ASCII gates.
pub fn filter_files(
    records: &[FileRecord],
    policy: &FilterPolicy,
) -> (Vec<FileRecord>, Vec<AuditRecord>) {
    let mut kept = Vec::new();
    let mut audit = Vec::new();
    for record in records {
        match file_rejection(record, policy) {
            None => kept.push(record.clone()),
            Some(reason) => audit.push(AuditRecord {
                path: record.path.clone(),
                stage: "filter_files".to_string(),
                reason,
            }),
        }
    }
    (kept, audit)
}

/// Per-record RNG derived from the policy seed and the record's content
/// hash, so cleaning is deterministic no matter where the record sits in
/// the corpus.
fn record_rng(seed: u64, content_hash: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(content_hash.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(key)
}

/// Remove all `package` lines and keep each `import` line with probability
/// `import_keep_probability`. Other lines pass through byte-exact; line
/// order is preserved; hash and size are re-derived.
pub fn clean_content(record: &FileRecord, policy: &FilterPolicy) -> FileRecord {
    let mut rng = record_rng(policy.seed, &record.content_hash);
    let content = &record.content;
    let trailing_newline = content.ends_with('\n');
    let mut lines: Vec<&str> = content.split('\n').collect();
    if trailing_newline {
        lines.pop();
    }
    let mut kept: Vec<&str> = Vec::with_capacity(lines.len());
    for line in lines {
        match classify_line(line) {
            LineClass::Package => {}
            LineClass::Import => {
                if rng.random::<f64>() < policy.import_keep_probability {
                    kept.push(line);
                }
            }
            LineClass::Blank | LineClass::Other => kept.push(line),
        }
    }
    let mut cleaned = kept.join("\n");
    if trailing_newline && !cleaned.is_empty() {
        cleaned.push('\n');
    }
    record.clone().with_content(cleaned)
}

fn email_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}").expect("static regex")
    })
}

fn ipv4_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(?:\d{1,3}\.){3}\d{1,3}\b").expect("static regex"))
}

fn key_candidate_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[A-Za-z0-9+/=_-]{32,}").expect("static regex"))
}

/// Shannon entropy in bits per character.
fn char_entropy(text: &str) -> f64 {
    let mut counts = std::collections::HashMap::new();
    let mut total = 0f64;
    for ch in text.chars() {
        *counts.entry(ch).or_insert(0f64) += 1.0;
        total += 1.0;
    }
    counts
        .values()
        .map(|&c| {
            let p = c / total;
            -p * p.log2()
        })
        .sum()
}

/// True for token candidates that look like secrets: long, mixed letters
/// and digits, high character entropy.
fn looks_high_entropy(token: &str) -> bool {
    let has_digit = token.chars().any(|c| c.is_ascii_digit());
    let has_alpha = token.chars().any(|c| c.is_ascii_alphabetic());
    has_digit && has_alpha && char_entropy(token) >= 3.5
}

/// Replace emails, IPv4 literals, and high-entropy tokens with fixed
/// placeholders. Regex-grade on purpose; idempotent.
pub fn redact_pii(record: &FileRecord) -> FileRecord {
    let step1 = email_re().replace_all(&record.content, "<EMAIL>");
    let step2 = ipv4_re().replace_all(&step1, "<IP>");
    let step3 = key_candidate_re().replace_all(&step2, |caps: &regex::Captures| {
        let token = caps.get(0).expect("match").as_str();
        if looks_high_entropy(token) {
            "<KEY>".to_string()
        } else {
            token.to_string()
        }
    });
    if step3 == record.content {
        record.clone()
    } else {
        record.clone().with_content(step3.into_owned())
    }
}
