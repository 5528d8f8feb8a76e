//! Exact content-hash deduplication and MinHash/LSH near-deduplication.
//!
//! Near-dedup pipeline: word-token shingles are hashed to 64-bit values, a
//! seeded multiply-shift family turns each shingle set into a MinHash
//! signature, LSH banding proposes candidate pairs, candidates are verified
//! against the signature-estimated Jaccard threshold, and verified pairs are
//! merged by union-find. One representative per cluster is kept: the member
//! whose repository has the most stars (ties: more forks, then smallest
//! `(repo_id, path)`).
//!
//! Signature computation is embarrassingly parallel; bucketing and merging
//! are a sequential reduction whose result does not depend on worker
//! scheduling.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::record::{FileRecord, RepoIndex, SimpleTokenizer, Tokenizer};

/// MinHash/LSH parameters.
///
/// The defaults are a Stack-style reconstruction (7-token shingles, 128
/// hashes in 16 bands, threshold 0.85) and are echoed into manifests as such.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinHashConfig {
    #[serde(default = "default_shingle_size")]
    pub shingle_size: usize,
    #[serde(default = "default_num_hashes")]
    pub num_hashes: usize,
    #[serde(default = "default_lsh_bands")]
    pub lsh_bands: usize,
    #[serde(default = "default_jaccard_threshold")]
    pub jaccard_threshold: f64,
    /// Seed for the hash family; derived from the pipeline seed in runs.
    #[serde(default)]
    pub seed: u64,
}

fn default_shingle_size() -> usize {
    7
}
fn default_num_hashes() -> usize {
    128
}
fn default_lsh_bands() -> usize {
    16
}
fn default_jaccard_threshold() -> f64 {
    0.85
}

impl Default for MinHashConfig {
    fn default() -> Self {
        MinHashConfig {
            shingle_size: default_shingle_size(),
            num_hashes: default_num_hashes(),
            lsh_bands: default_lsh_bands(),
            jaccard_threshold: default_jaccard_threshold(),
            seed: 0,
        }
    }
}

impl MinHashConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shingle_size == 0 {
            return Err(Error::invalid("MinHashConfig", "shingle_size must be >= 1"));
        }
        if self.num_hashes == 0 || self.lsh_bands == 0 {
            return Err(Error::invalid(
                "MinHashConfig",
                "num_hashes and lsh_bands must be >= 1",
            ));
        }
        if !self.num_hashes.is_multiple_of(self.lsh_bands) {
            return Err(Error::invalid(
                "MinHashConfig",
                format!(
                    "num_hashes ({}) must be divisible by lsh_bands ({})",
                    self.num_hashes, self.lsh_bands
                ),
            ));
        }
        if !(self.jaccard_threshold > 0.0 && self.jaccard_threshold <= 1.0) {
            return Err(Error::invalid(
                "MinHashConfig",
                "jaccard_threshold must be in (0, 1]",
            ));
        }
        Ok(())
    }
}

/// FNV-1a, 64-bit. Stable across platforms and releases, unlike the std
/// hasher.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn fnv1a_extend(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Hash each `shingle_size`-token window of `content` to a u64. Contents
/// shorter than one full window become a single degenerate shingle.
pub fn shingle_hashes(content: &str, shingle_size: usize) -> Vec<u64> {
    let tokens = SimpleTokenizer.tokenize(content);
    let mut hashes = Vec::new();
    let hash_window = |window: &[String]| {
        let mut h = 0xcbf29ce484222325u64;
        for token in window {
            h = fnv1a_extend(h, token.as_bytes());
            h = fnv1a_extend(h, &[0x1f]);
        }
        h
    };
    if tokens.len() < shingle_size {
        hashes.push(hash_window(&tokens));
    } else {
        for window in tokens.windows(shingle_size) {
            hashes.push(hash_window(window));
        }
    }
    hashes.sort_unstable();
    hashes.dedup();
    hashes
}

/// Seeded MinHash signature generator.
///
/// Permutations are approximated by multiply-shift transforms
/// `a * h + b` with odd `a`, drawn from a ChaCha stream keyed by the config
/// seed.
pub struct MinHasher {
    config: MinHashConfig,
    params: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(config: MinHashConfig) -> Result<MinHasher> {
        config.validate()?;
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let params = (0..config.num_hashes)
            .map(|_| (rng.next_u64() | 1, rng.next_u64()))
            .collect();
        Ok(MinHasher { config, params })
    }

    pub fn config(&self) -> &MinHashConfig {
        &self.config
    }

    /// Signature of one content string: per transform, the minimum hash over
    /// all shingles.
    pub fn signature(&self, content: &str) -> Vec<u64> {
        let shingles = shingle_hashes(content, self.config.shingle_size);
        self.params
            .iter()
            .map(|&(a, b)| {
                shingles
                    .iter()
                    .map(|&h| a.wrapping_mul(h).wrapping_add(b))
                    .min()
                    .unwrap_or(u64::MAX)
            })
            .collect()
    }
}

/// Convenience wrapper building the hash family per call; batch callers
/// should hold a [`MinHasher`].
pub fn minhash_signature(record: &FileRecord, config: &MinHashConfig) -> Result<Vec<u64>> {
    Ok(MinHasher::new(*config)?.signature(&record.content))
}

/// Fraction of equal signature components: the MinHash Jaccard estimate.
pub fn estimate_jaccard(a: &[u64], b: &[u64]) -> f64 {
    assert_eq!(a.len(), b.len(), "signatures must have equal length");
    let equal = a.iter().zip(b).filter(|(x, y)| x == y).count();
    equal as f64 / a.len() as f64
}

/// A duplicate cluster over record indices into the input slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DupCluster {
    /// Member indices in input order; never empty.
    pub members: Vec<usize>,
    /// Index of the kept member; always one of `members`.
    pub representative: usize,
    /// Minimum estimated Jaccard over the verified pairs that formed the
    /// cluster; 1.0 for singletons and exact clusters.
    pub est_jaccard_min: f64,
}

/// One row of the cluster report artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterReportRow {
    pub cluster_id: u64,
    pub representative_path: String,
    pub member_count: usize,
    pub est_jaccard_min: f64,
}

impl DupCluster {
    pub fn report_row(&self, cluster_id: u64, records: &[FileRecord]) -> ClusterReportRow {
        ClusterReportRow {
            cluster_id,
            representative_path: records[self.representative].path.clone(),
            member_count: self.members.len(),
            est_jaccard_min: self.est_jaccard_min,
        }
    }
}

/// Partition records by exact content hash. Clusters appear in first-seen
/// order; the representative is the first member (star-based selection
/// happens in [`pick_representative`] when repo metadata is in scope).
pub fn exact_dedup(records: &[FileRecord]) -> Vec<DupCluster> {
    let mut by_hash: HashMap<&str, usize> = HashMap::new();
    let mut clusters: Vec<DupCluster> = Vec::new();
    for (idx, record) in records.iter().enumerate() {
        match by_hash.get(record.content_hash.as_str()) {
            Some(&cluster_idx) => clusters[cluster_idx].members.push(idx),
            None => {
                by_hash.insert(record.content_hash.as_str(), clusters.len());
                clusters.push(DupCluster {
                    members: vec![idx],
                    representative: idx,
                    est_jaccard_min: 1.0,
                });
            }
        }
    }
    clusters
}

/// Total order for representative selection: most stars first, then most
/// forks, then lexicographically smallest `(repo_id, path)`.
pub fn pick_representative(
    members: &[usize],
    records: &[FileRecord],
    repo_index: &RepoIndex,
) -> Result<usize> {
    let mut best: Option<usize> = None;
    for &idx in members {
        let record = &records[idx];
        let repo = repo_index
            .get(&record.repo_id)
            .ok_or_else(|| Error::UnknownRepo {
                path: record.path.clone(),
                repo_id: record.repo_id.clone(),
            })?;
        let better = match best {
            None => true,
            Some(cur) => {
                let cur_rec = &records[cur];
                let cur_repo = &repo_index[&cur_rec.repo_id];
                (
                    std::cmp::Reverse(repo.stars),
                    std::cmp::Reverse(repo.forks),
                    (&record.repo_id, &record.path),
                ) < (
                    std::cmp::Reverse(cur_repo.stars),
                    std::cmp::Reverse(cur_repo.forks),
                    (&cur_rec.repo_id, &cur_rec.path),
                )
            }
        };
        if better {
            best = Some(idx);
        }
    }
    best.ok_or_else(|| Error::invalid("DupCluster", "cluster has no members"))
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> UnionFind {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Near-deduplicate records and choose a representative per cluster.
///
/// Clusters are ordered by their smallest member index; members stay in
/// input order. The result is deterministic for a fixed config and input
/// order.
pub fn near_dedup(
    records: &[FileRecord],
    repo_index: &RepoIndex,
    config: &MinHashConfig,
) -> Result<Vec<DupCluster>> {
    let hasher = MinHasher::new(*config)?;
    let signatures: Vec<Vec<u64>> = records
        .par_iter()
        .map(|r| hasher.signature(&r.content))
        .collect();

    let rows_per_band = config.num_hashes / config.lsh_bands;
    let mut buckets: HashMap<(usize, u64), Vec<usize>> = HashMap::new();
    for (idx, sig) in signatures.iter().enumerate() {
        for band in 0..config.lsh_bands {
            let slice = &sig[band * rows_per_band..(band + 1) * rows_per_band];
            let mut h = 0xcbf29ce484222325u64;
            for v in slice {
                h = fnv1a_extend(h, &v.to_le_bytes());
            }
            buckets.entry((band, h)).or_default().push(idx);
        }
    }

    let mut candidates: Vec<(usize, usize)> = buckets
        .values()
        .filter(|bucket| bucket.len() > 1)
        .flat_map(|bucket| {
            let mut pairs = Vec::new();
            for i in 0..bucket.len() {
                for j in i + 1..bucket.len() {
                    let (a, b) = (bucket[i].min(bucket[j]), bucket[i].max(bucket[j]));
                    pairs.push((a, b));
                }
            }
            pairs
        })
        .collect();
    candidates.sort_unstable();
    candidates.dedup();

    let mut uf = UnionFind::new(records.len());
    let mut verified: Vec<(usize, usize, f64)> = Vec::new();
    for (a, b) in candidates {
        let est = estimate_jaccard(&signatures[a], &signatures[b]);
        if est >= config.jaccard_threshold {
            uf.union(a, b);
            verified.push((a, b, est));
        }
    }

    let mut groups: HashMap<usize, Vec<usize>> = HashMap::new();
    for idx in 0..records.len() {
        groups.entry(uf.find(idx)).or_default().push(idx);
    }
    let mut edge_min: HashMap<usize, f64> = HashMap::new();
    for (a, _, est) in &verified {
        let root = uf.find(*a);
        let entry = edge_min.entry(root).or_insert(1.0);
        if *est < *entry {
            *entry = *est;
        }
    }

    let mut clusters: Vec<DupCluster> = Vec::with_capacity(groups.len());
    for (root, mut members) in groups {
        members.sort_unstable();
        let representative = pick_representative(&members, records, repo_index)?;
        clusters.push(DupCluster {
            members,
            representative,
            est_jaccard_min: *edge_min.get(&root).unwrap_or(&1.0),
        });
    }
    clusters.sort_by_key(|c| c.members[0]);
    Ok(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::{build_repo_index, KotlinExt, RepoMeta};
    use std::collections::HashSet;

    fn record(path: &str, repo: &str, content: &str) -> FileRecord {
        FileRecord::new(path, repo, content, KotlinExt::Kt)
    }

    fn repo(id: &str, stars: u64, forks: u64) -> RepoMeta {
        RepoMeta {
            repo_id: id.to_string(),
            stars,
            forks,
            license_id: Some("MIT".to_string()),
            kotlin_file_count: 10,
        }
    }

    /// Brute-force Jaccard over explicitly enumerated token windows; the
    /// independent oracle for the MinHash estimator.
    pub(crate) fn true_jaccard(a: &str, b: &str, shingle_size: usize) -> f64 {
        let windows = |text: &str| -> HashSet<Vec<String>> {
            let tokens = SimpleTokenizer.tokenize(text);
            if tokens.len() < shingle_size {
                return HashSet::from([tokens]);
            }
            tokens
                .windows(shingle_size)
                .map(|w| w.to_vec())
                .collect()
        };
        let (sa, sb) = (windows(a), windows(b));
        let inter = sa.intersection(&sb).count();
        let union = sa.union(&sb).count();
        inter as f64 / union as f64
    }

    fn synth_content(seed: u64, tokens: usize) -> String {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let words = [
            "fun", "val", "var", "class", "return", "if", "else", "when", "list", "map", "index",
            "count", "item", "node", "next", "sum", "left", "right", "size", "key",
        ];
        (0..tokens)
            .map(|_| words[rng.random_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Replace `edits` tokens of `base`, spaced apart, to form a near-copy.
    fn mutate(base: &str, edits: usize, seed: u64) -> String {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut tokens: Vec<&str> = base.split(' ').collect();
        let step = tokens.len() / edits.max(1);
        for e in 0..edits {
            let pos = (e * step + rng.random_range(0..step.max(1))).min(tokens.len() - 1);
            tokens[pos] = "mutated";
        }
        tokens.join(" ")
    }

    #[test]
    fn exact_dedup_groups_identical_contents() {
        let records = vec![
            record("a.kt", "r1", "same content here"),
            record("b.kt", "r2", "same content here"),
            record("c.kt", "r1", "different content"),
        ];
        let clusters = exact_dedup(&records);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].members, vec![0, 1]);
        assert_eq!(clusters[1].members, vec![2]);
    }

    #[test]
    fn exact_dedup_separates_single_byte_difference() {
        let records = vec![record("a.kt", "r1", "alpha"), record("b.kt", "r1", "alphb")];
        assert_eq!(exact_dedup(&records).len(), 2);
    }

    #[test]
    fn exact_dedup_is_idempotent_on_representatives() {
        let records = vec![
            record("a.kt", "r1", "one"),
            record("b.kt", "r2", "one"),
            record("c.kt", "r3", "two"),
        ];
        let reps: Vec<FileRecord> = exact_dedup(&records)
            .iter()
            .map(|c| records[c.representative].clone())
            .collect();
        let again = exact_dedup(&reps);
        assert!(again.iter().all(|c| c.members.len() == 1));
    }

    #[test]
    fn identical_contents_identical_signatures() {
        let cfg = MinHashConfig::default();
        let a = record("a.kt", "r1", "fun x() = 1 + 2 + 3 and more tokens here");
        let b = record("b.kt", "r2", "fun x() = 1 + 2 + 3 and more tokens here");
        assert_eq!(
            minhash_signature(&a, &cfg).unwrap(),
            minhash_signature(&b, &cfg).unwrap()
        );
    }

    #[test]
    fn estimate_tracks_true_jaccard() {
        let cfg = MinHashConfig::default();
        let hasher = MinHasher::new(cfg).unwrap();
        for (edits, seed) in [(1usize, 11u64), (3, 12), (8, 13), (20, 14)] {
            let base = synth_content(seed, 160);
            let other = mutate(&base, edits, seed + 100);
            let truth = true_jaccard(&base, &other, cfg.shingle_size);
            let est = estimate_jaccard(&hasher.signature(&base), &hasher.signature(&other));
            assert!(
                (est - truth).abs() <= 0.1,
                "edits={edits}: est {est} vs true {truth}"
            );
        }
    }

    #[test]
    fn disjoint_shingle_sets_estimate_near_zero() {
        for seed in 0..10u64 {
            let cfg = MinHashConfig {
                seed,
                ..MinHashConfig::default()
            };
            let hasher = MinHasher::new(cfg).unwrap();
            let a = "alpha beta gamma delta epsilon zeta eta theta iota kappa lambda mu";
            let b = "one two three four five six seven eight nine ten eleven twelve";
            assert_eq!(true_jaccard(a, b, cfg.shingle_size), 0.0);
            let est = estimate_jaccard(&hasher.signature(a), &hasher.signature(b));
            assert!(est <= 0.05, "seed {seed}: est {est}");
        }
    }

    #[test]
    fn representative_has_most_stars() {
        let records = vec![
            record("b.kt", "repo_b", synth_content(1, 120).as_str()),
            record("a.kt", "repo_a", &mutate(&synth_content(1, 120), 1, 2)),
        ];
        let index = build_repo_index([repo("repo_a", 10, 0), repo("repo_b", 3, 50)]).unwrap();
        let clusters = near_dedup(&records, &index, &MinHashConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1, "near-copies should co-cluster");
        assert_eq!(records[clusters[0].representative].repo_id, "repo_a");
    }

    #[test]
    fn singleton_input_is_its_own_representative() {
        let records = vec![record("a.kt", "r1", "only one file")];
        let index = build_repo_index([repo("r1", 1, 0)]).unwrap();
        let clusters = near_dedup(&records, &index, &MinHashConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].members, vec![0]);
        assert_eq!(clusters[0].representative, 0);
        assert_eq!(clusters[0].est_jaccard_min, 1.0);
    }

    #[test]
    fn star_tie_breaks_by_forks_then_ids() {
        let records = vec![
            record("z.kt", "r1", "tie content"),
            record("a.kt", "r2", "tie content"),
        ];
        // equal stars, r2 has more forks
        let index = build_repo_index([repo("r1", 5, 1), repo("r2", 5, 9)]).unwrap();
        let rep = pick_representative(&[0, 1], &records, &index).unwrap();
        assert_eq!(records[rep].repo_id, "r2");
        // full tie: lexicographically smallest (repo_id, path)
        let index = build_repo_index([repo("r1", 5, 1), repo("r2", 5, 1)]).unwrap();
        let rep = pick_representative(&[0, 1], &records, &index).unwrap();
        assert_eq!(records[rep].repo_id, "r1");
    }

    #[test]
    fn clusters_partition_input() {
        let mut records = Vec::new();
        for i in 0..30u64 {
            records.push(record(
                &format!("f{i}.kt"),
                "r1",
                &synth_content(i / 2, 100),
            ));
        }
        let index = build_repo_index([repo("r1", 1, 0)]).unwrap();
        let clusters = near_dedup(&records, &index, &MinHashConfig::default()).unwrap();
        let mut seen = vec![false; records.len()];
        for cluster in &clusters {
            assert!(cluster.members.contains(&cluster.representative));
            for &m in &cluster.members {
                assert!(!seen[m], "record {m} in two clusters");
                seen[m] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn determinism_across_runs() {
        let records: Vec<FileRecord> = (0..40u64)
            .map(|i| record(&format!("f{i}.kt"), "r1", &synth_content(i % 13, 90)))
            .collect();
        let index = build_repo_index([repo("r1", 1, 0)]).unwrap();
        let cfg = MinHashConfig {
            seed: 99,
            ..MinHashConfig::default()
        };
        let a = near_dedup(&records, &index, &cfg).unwrap();
        let b = near_dedup(&records, &index, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn raising_threshold_only_refines_clusters() {
        let records: Vec<FileRecord> = (0..24u64)
            .map(|i| {
                let base = synth_content(i / 3, 120);
                record(&format!("f{i}.kt"), "r1", &mutate(&base, (i % 3) as usize + 1, i))
            })
            .collect();
        let index = build_repo_index([repo("r1", 1, 0)]).unwrap();
        let loose = near_dedup(
            &records,
            &index,
            &MinHashConfig {
                jaccard_threshold: 0.6,
                ..MinHashConfig::default()
            },
        )
        .unwrap();
        let strict = near_dedup(
            &records,
            &index,
            &MinHashConfig {
                jaccard_threshold: 0.9,
                ..MinHashConfig::default()
            },
        )
        .unwrap();
        // every strict cluster sits inside exactly one loose cluster
        let mut loose_of = vec![usize::MAX; records.len()];
        for (ci, cluster) in loose.iter().enumerate() {
            for &m in &cluster.members {
                loose_of[m] = ci;
            }
        }
        for cluster in &strict {
            let first = loose_of[cluster.members[0]];
            assert!(cluster.members.iter().all(|&m| loose_of[m] == first));
        }
    }

    #[test]
    fn config_validation() {
        assert!(MinHashConfig::default().validate().is_ok());
        assert!(MinHashConfig {
            num_hashes: 100,
            lsh_bands: 16,
            ..MinHashConfig::default()
        }
        .validate()
        .is_err());
        assert!(MinHashConfig {
            jaccard_threshold: 0.0,
            ..MinHashConfig::default()
        }
        .validate()
        .is_err());
    }
}
