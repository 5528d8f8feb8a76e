//! Stage orchestration: wires the corpus, dedup, filter, quality, gateway,
//! and eval modules into reproducible, manifest-producing runs.
//!
//! Stages run sequentially and communicate through artifacts inside one run
//! directory. Each stage writes its outputs first and its manifest last, so
//! an interrupted run leaves a valid checkpoint: `--resume` skips stages
//! whose manifest already matches the config digest, and the rank stage
//! additionally resumes from its pair-score cache.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{BackendKind, PipelineConfig};
use crate::dedup::{exact_dedup, near_dedup, pick_representative, MinHashConfig};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_metrics, completion_exact_match, postprocess_generation, render_fraction, run_task,
    CompletionExample, CompletionResult, EvalOutcome, EvalTask, GenerationRecord, Verdict,
};
use crate::filter::{clean_content, filter_files, filter_repos, redact_pii, AuditRecord};
use crate::gateway::{
    translate_exercise, ChatBackend, GatewayOracle, HttpBackend, JobStatus, MockBackend,
    RecordingBackend, ReplayBackend, TranslationJob,
};
use crate::jsonl::{read_jsonl_file, write_jsonl_file};
use crate::manifest::{digest_file, stage_seed, RunManifest, StageManifest, StageRef};
use crate::quality::{
    label_top_fraction, select_top_k, three_pass_rank, train_quality_classifier, CachedOracle,
    Label, PairwiseOracle, QualityItem,
};
use crate::record::{build_repo_index, dataset_stats, FileRecord, RepoMeta, SimpleTokenizer};

/// What a completed stage reports back to the driver.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: String,
    pub manifest_digest: String,
    pub record_count: u64,
    pub stats: Option<crate::record::DatasetStats>,
    /// Human-facing line the CLI prints (metrics rows, stats rows).
    pub message: Option<String>,
    pub skipped: bool,
}

/// One run of the pipeline bound to a config and an output directory.
pub struct RunContext {
    pub config: PipelineConfig,
    pub config_digest: String,
    pub out_dir: PathBuf,
    pub resume: bool,
}

impl RunContext {
    pub fn new(
        config: PipelineConfig,
        config_digest: String,
        out_dir: PathBuf,
        resume: bool,
    ) -> RunContext {
        RunContext {
            config,
            config_digest,
            out_dir,
            resume,
        }
    }

    fn stage_dir(&self, stage: &str) -> Result<PathBuf> {
        let dir = self.out_dir.join(stage);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn manifest_path(&self, stage: &str) -> PathBuf {
        self.out_dir.join(stage).join("manifest.json")
    }

    fn new_manifest(&self, stage: &str, prev: Option<String>) -> StageManifest {
        StageManifest::new(
            &self.config.dataset_name,
            stage,
            self.config.seed,
            &self.config_digest,
            prev,
        )
    }

    /// Resume check: a stage is done when its manifest exists and was
    /// produced by this exact config.
    fn completed_outcome(&self, stage: &str) -> Option<StageOutcome> {
        if !self.resume {
            return None;
        }
        let path = self.manifest_path(stage);
        let manifest = StageManifest::read(&path).ok()?;
        if manifest.config_digest != self.config_digest {
            return None;
        }
        let digest = digest_file(&path).ok()?;
        Some(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: manifest.record_count,
            stats: manifest.stats,
            message: None,
            skipped: true,
        })
    }

    /// Execute one stage by name.
    pub fn run_stage(&self, stage: &str, prev: Option<String>) -> Result<StageOutcome> {
        self.config.check_stage_inputs(stage)?;
        if let Some(done) = self.completed_outcome(stage) {
            return Ok(done);
        }
        match stage {
            "ingest" => self.stage_ingest(prev),
            "dedup" => self.stage_dedup(prev),
            "filter" => self.stage_filter(prev),
            "rank" => self.stage_rank(prev),
            "select" => self.stage_select(prev),
            "translate" => self.stage_translate(prev),
            "eval" => self.stage_eval(prev),
            "complete-eval" => self.stage_complete_eval(prev),
            "stats" => self.stage_stats(prev),
            other => Err(Error::invalid("stage", format!("unknown stage {other}"))),
        }
    }

    /// Execute the configured stage sequence and write the run manifest.
    pub fn run_all(&self) -> Result<Vec<StageOutcome>> {
        let mut outcomes = Vec::new();
        let mut prev: Option<String> = None;
        let mut last_records: Option<(u64, Option<crate::record::DatasetStats>)> = None;
        for stage in self.config.run_stages() {
            let outcome = self.run_stage(&stage, prev.clone())?;
            prev = Some(outcome.manifest_digest.clone());
            if outcome.stats.is_some() || outcome.record_count > 0 {
                last_records = Some((outcome.record_count, outcome.stats));
            }
            outcomes.push(outcome);
        }
        let (record_count, stats) = last_records.unwrap_or((0, None));
        let run_manifest = RunManifest {
            dataset_name: self.config.dataset_name.clone(),
            record_count,
            stats,
            pipeline_seed: self.config.seed,
            config_digest: self.config_digest.clone(),
            stage_versions: outcomes
                .iter()
                .map(|o| (o.stage.clone(), crate::manifest::STAGE_VERSION.to_string()))
                .collect(),
            stages: outcomes
                .iter()
                .map(|o| StageRef {
                    stage: o.stage.clone(),
                    manifest_digest: o.manifest_digest.clone(),
                })
                .collect(),
            optimizer: self.config.optimizer,
        };
        run_manifest.write(&self.out_dir.join("run.manifest.json"))?;
        Ok(outcomes)
    }

    fn require_input<'a>(&'a self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::invalid("PipelineConfig", format!("inputs.{key} is required")))
    }

    /// Locate a record artifact: prefer earlier stage outputs in this run
    /// directory, fall back to the configured input file.
    fn resolve_records(&self, preferred: &[(&str, &str)]) -> Result<PathBuf> {
        for (stage, file) in preferred {
            let candidate = self.out_dir.join(stage).join(file);
            if candidate.exists() {
                return Ok(candidate);
            }
        }
        if let Some(files) = &self.config.inputs.files {
            if files.exists() {
                return Ok(files.clone());
            }
        }
        Err(Error::invalid(
            "pipeline",
            format!(
                "no input records found; expected one of {:?} under {} or inputs.files",
                preferred,
                self.out_dir.display()
            ),
        ))
    }

    fn resolve_repos(&self) -> Result<PathBuf> {
        let staged = self.out_dir.join("ingest").join("repos.jsonl");
        if staged.exists() {
            return Ok(staged);
        }
        self.require_input(&self.config.inputs.repos, "repos")
            .map(Path::to_path_buf)
    }

    fn build_backend(&self) -> Result<Box<dyn ChatBackend>> {
        let gateway = &self.config.gateway;
        Ok(match gateway.backend {
            BackendKind::Mock => Box::new(MockBackend::new(gateway.mock_mode.clone())),
            BackendKind::Http => {
                let http = gateway.http.clone().ok_or_else(|| {
                    Error::invalid("GatewayConfig", "http backend needs gateway.http")
                })?;
                Box::new(HttpBackend::new(http)?)
            }
            BackendKind::Replay => {
                let path = gateway.replay_log.as_deref().ok_or_else(|| {
                    Error::invalid("GatewayConfig", "replay backend needs gateway.replay_log")
                })?;
                Box::new(ReplayBackend::load(path)?)
            }
        })
    }

    // -- stages -----------------------------------------------------------

    fn stage_ingest(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "ingest";
        let dir = self.stage_dir(stage)?;
        let files_path = self.require_input(&self.config.inputs.files, "files")?;
        let repos_path = self.require_input(&self.config.inputs.repos, "repos")?;

        let records: Vec<FileRecord> = read_jsonl_file(files_path)?;
        let repos: Vec<RepoMeta> = read_jsonl_file(repos_path)?;
        let index = build_repo_index(repos.iter().cloned())?;
        let stats = dataset_stats(&records, &index, &SimpleTokenizer)?;

        write_jsonl_file(&dir.join("records.jsonl"), &records)?;
        write_jsonl_file(&dir.join("repos.jsonl"), &repos)?;

        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("files", digest_file(files_path)?)
            .input("repos", digest_file(repos_path)?)
            .count("files", records.len() as u64)
            .count("repos", repos.len() as u64)
            .note("line_counting", "physical lines, blank lines included")
            .note(
                "tokens",
                "tokenizer-relative: whitespace-plus-punctuation splitter",
            );
        manifest
            .output("records", &dir.join("records.jsonl"))?
            .output("repos", &dir.join("repos.jsonl"))?;
        manifest.record_count = records.len() as u64;
        manifest.stats = Some(stats);
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: records.len() as u64,
            stats: Some(stats),
            message: Some(stats.render_row()),
            skipped: false,
        })
    }

    fn stage_dedup(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "dedup";
        let dir = self.stage_dir(stage)?;
        let records_path = self.resolve_records(&[("ingest", "records.jsonl")])?;
        let repos_path = self.resolve_repos()?;
        let records: Vec<FileRecord> = read_jsonl_file(&records_path)?;
        let repos: Vec<RepoMeta> = read_jsonl_file(&repos_path)?;

        // repo-level filters run before any dedup
        let (kept_repos, mut audit) = filter_repos(&repos, &self.config.filter);
        let index = build_repo_index(kept_repos.iter().cloned())?;
        let mut survivors: Vec<FileRecord> = Vec::with_capacity(records.len());
        for record in records.iter() {
            if index.contains_key(&record.repo_id) {
                survivors.push(record.clone());
            } else {
                audit.push(AuditRecord {
                    path: record.path.clone(),
                    stage: "filter_repos".to_string(),
                    reason: format!("repo {} rejected", record.repo_id),
                });
            }
        }

        let exact_clusters = exact_dedup(&survivors);
        let mut exact_reps: Vec<FileRecord> = Vec::with_capacity(exact_clusters.len());
        for cluster in &exact_clusters {
            let rep = pick_representative(&cluster.members, &survivors, &index)?;
            exact_reps.push(survivors[rep].clone());
        }

        let minhash = MinHashConfig {
            seed: stage_seed(self.config.seed, "dedup"),
            ..self.config.minhash
        };
        let clusters = near_dedup(&exact_reps, &index, &minhash)?;
        let representatives: Vec<FileRecord> = clusters
            .iter()
            .map(|c| exact_reps[c.representative].clone())
            .collect();
        let report: Vec<_> = clusters
            .iter()
            .enumerate()
            .map(|(i, c)| c.report_row(i as u64, &exact_reps))
            .collect();

        write_jsonl_file(&dir.join("representatives.jsonl"), &representatives)?;
        write_jsonl_file(&dir.join("clusters.jsonl"), &report)?;
        write_jsonl_file(&dir.join("audit.jsonl"), &audit)?;

        let stats = dataset_stats(&representatives, &index, &SimpleTokenizer)?;
        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("records", digest_file(&records_path)?)
            .input("repos", digest_file(&repos_path)?)
            .count("input_files", records.len() as u64)
            .count("repos_kept", kept_repos.len() as u64)
            .count("repos_rejected", (repos.len() - kept_repos.len()) as u64)
            .count("files_after_repo_filter", survivors.len() as u64)
            .count("exact_clusters", exact_clusters.len() as u64)
            .count("near_clusters", clusters.len() as u64)
            .count("representatives", representatives.len() as u64)
            .note("stage_order", "repo filters -> exact dedup -> near dedup")
            .note(
                "minhash_parameters",
                "Stack-style reconstruction: 7-token shingles, 128 hashes, 16 bands, threshold 0.85 unless overridden",
            );
        manifest
            .output("representatives", &dir.join("representatives.jsonl"))?
            .output("clusters", &dir.join("clusters.jsonl"))?
            .output("audit", &dir.join("audit.jsonl"))?;
        manifest.record_count = representatives.len() as u64;
        manifest.stats = Some(stats);
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: representatives.len() as u64,
            stats: Some(stats),
            message: None,
            skipped: false,
        })
    }

    fn stage_filter(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "filter";
        let dir = self.stage_dir(stage)?;
        let records_path = self.resolve_records(&[
            ("dedup", "representatives.jsonl"),
            ("ingest", "records.jsonl"),
        ])?;
        let records: Vec<FileRecord> = read_jsonl_file(&records_path)?;
        let policy = crate::filter::FilterPolicy {
            seed: stage_seed(self.config.seed, "filter"),
            ..self.config.filter.clone()
        };

        let (kept, audit) = filter_files(&records, &policy);
        let cleaned: Vec<FileRecord> = kept
            .par_iter()
            .map(|record| redact_pii(&clean_content(record, &policy)))
            .collect();

        write_jsonl_file(&dir.join("records.jsonl"), &cleaned)?;
        write_jsonl_file(&dir.join("audit.jsonl"), &audit)?;

        let non_ascii = audit
            .iter()
            .filter(|a| a.reason.contains("non-ascii"))
            .count() as u64;
        let low_sloc = audit.iter().filter(|a| a.reason.contains("sloc")).count() as u64;
        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("records", digest_file(&records_path)?)
            .count("input_files", records.len() as u64)
            .count("kept", cleaned.len() as u64)
            .count("rejected_low_sloc", low_sloc)
            .count("rejected_non_ascii", non_ascii)
            .note("non_ascii_policy", "whole file dropped on any non-ASCII byte")
            .note(
                "stage_order",
                "file filters -> package/import cleaning -> pii redaction, after dedup",
            );
        manifest
            .output("records", &dir.join("records.jsonl"))?
            .output("audit", &dir.join("audit.jsonl"))?;
        manifest.record_count = cleaned.len() as u64;
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: cleaned.len() as u64,
            stats: None,
            message: None,
            skipped: false,
        })
    }

    fn stage_rank(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "rank";
        let dir = self.stage_dir(stage)?;
        let records_path = self.resolve_records(&[
            ("filter", "records.jsonl"),
            ("dedup", "representatives.jsonl"),
            ("ingest", "records.jsonl"),
        ])?;
        let records: Vec<FileRecord> = read_jsonl_file(&records_path)?;
        if records.is_empty() {
            return Err(Error::EmptyInput("rank stage records"));
        }
        let items: Vec<QualityItem> = records.iter().map(QualityItem::from).collect();

        let sample: Vec<QualityItem> = match self.config.quality.sample_size {
            Some(size) if size < items.len() => {
                let mut indices: Vec<usize> = (0..items.len()).collect();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(stage_seed(self.config.seed, "rank-sample"));
                indices.shuffle(&mut rng);
                indices.truncate(size);
                indices.sort_unstable();
                indices.into_iter().map(|i| items[i].clone()).collect()
            }
            _ => items.clone(),
        };

        let backend = self.build_backend()?;
        let recording;
        let effective: &dyn ChatBackend = match &self.config.gateway.record_log {
            Some(path) => {
                recording = RecordingBackend::create(backend.as_ref(), path)?;
                &recording
            }
            None => backend.as_ref(),
        };
        let oracle = GatewayOracle::new(
            effective,
            self.config.quality.prompt.clone(),
            self.config.gateway.retry,
        );
        let cached = CachedOracle::with_log(&oracle, &dir.join("pair_cache.jsonl"))?;

        let state = three_pass_rank(&cached, &sample, stage_seed(self.config.seed, "rank"))?;
        let labels = label_top_fraction(&state.final_scores, self.config.quality.label_fraction)?;
        let train_options = crate::classifier::TrainOptions {
            seed: stage_seed(self.config.seed, "rank-train"),
            ..self.config.quality.train
        };
        let classifier = train_quality_classifier(&sample, &labels, train_options)?;

        write_jsonl_file(&dir.join("scores.jsonl"), &state.score_rows())?;
        write_jsonl_file(&dir.join("labels.jsonl"), &labels)?;
        classifier.save(&dir.join("classifier.json"))?;

        let positives = labels.iter().filter(|l| l.label == Label::Positive).count();
        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("records", digest_file(&records_path)?)
            .count("sample", sample.len() as u64)
            .count("positives", positives as u64)
            .count("oracle_pairs_cached", cached.cached_pairs() as u64)
            .note("oracle", &cached.oracle_id())
            .note(
                "prompt",
                "pairwise prompt text is a reconstruction; configurable via quality.prompt",
            )
            .note(
                "anchors",
                &format!(
                    "{} -> {} -> {}",
                    state.anchors[0], state.anchors[1], state.anchors[2]
                ),
            );
        manifest
            .output("scores", &dir.join("scores.jsonl"))?
            .output("labels", &dir.join("labels.jsonl"))?
            .output("classifier", &dir.join("classifier.json"))?
            .output("pair_cache", &dir.join("pair_cache.jsonl"))?;
        manifest.record_count = sample.len() as u64;
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: sample.len() as u64,
            stats: None,
            message: None,
            skipped: false,
        })
    }

    fn stage_select(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "select";
        let dir = self.stage_dir(stage)?;
        let records_path = self.resolve_records(&[
            ("filter", "records.jsonl"),
            ("dedup", "representatives.jsonl"),
            ("ingest", "records.jsonl"),
        ])?;
        let classifier_path = self.out_dir.join("rank").join("classifier.json");
        if !classifier_path.exists() {
            return Err(Error::invalid(
                "pipeline",
                "select stage needs rank/classifier.json; run the rank stage first",
            ));
        }
        let records: Vec<FileRecord> = read_jsonl_file(&records_path)?;
        let classifier = crate::classifier::QualityClassifier::load(&classifier_path)?;
        let top = select_top_k(&records, &classifier, self.config.quality.select_k)?;
        let selected: Vec<FileRecord> = top.iter().map(|&i| records[i].clone()).collect();
        write_jsonl_file(&dir.join("selected.jsonl"), &selected)?;

        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("records", digest_file(&records_path)?)
            .input("classifier", digest_file(&classifier_path)?)
            .count("input_files", records.len() as u64)
            .count("selected", selected.len() as u64)
            .count("select_k", self.config.quality.select_k as u64);
        manifest.output("selected", &dir.join("selected.jsonl"))?;
        manifest.record_count = selected.len() as u64;
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: selected.len() as u64,
            stats: None,
            message: None,
            skipped: false,
        })
    }

    fn stage_translate(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "translate";
        let dir = self.stage_dir(stage)?;
        let jobs_path = self.require_input(&self.config.inputs.translation_jobs, "translation_jobs")?;
        let jobs: Vec<TranslationJob> = read_jsonl_file(jobs_path)?;
        let backend = self.build_backend()?;
        let recording;
        let effective: &dyn ChatBackend = match &self.config.gateway.record_log {
            Some(path) => {
                recording = RecordingBackend::create(backend.as_ref(), path)?;
                &recording
            }
            None => backend.as_ref(),
        };

        let mut budget = self.config.translate.batch_size;
        let processed: Vec<TranslationJob> = jobs
            .into_iter()
            .map(|job| {
                if job.status == JobStatus::Pending && budget > 0 {
                    budget -= 1;
                    translate_exercise(effective, job)
                } else {
                    job
                }
            })
            .collect();
        write_jsonl_file(&dir.join("jobs.jsonl"), &processed)?;

        let count_status = |status: JobStatus| -> u64 {
            processed.iter().filter(|j| j.status == status).count() as u64
        };
        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("jobs", digest_file(jobs_path)?)
            .count("jobs", processed.len() as u64)
            .count("done", count_status(JobStatus::Done))
            .count("rejected", count_status(JobStatus::Rejected))
            .count("pending", count_status(JobStatus::Pending))
            .count("batch_size", self.config.translate.batch_size as u64)
            .note(
                "validation",
                "syntactic only: requires `fun ` and a doc comment; rejects queue for human review",
            );
        manifest.output("jobs", &dir.join("jobs.jsonl"))?;
        manifest.record_count = processed.len() as u64;
        let digest = manifest.write(&self.manifest_path(stage))?;
        let message = format!(
            "translate: {} done, {} rejected, {} pending",
            count_status(JobStatus::Done),
            count_status(JobStatus::Rejected),
            count_status(JobStatus::Pending)
        );
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: processed.len() as u64,
            stats: None,
            message: Some(message),
            skipped: false,
        })
    }

    fn stage_eval(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "eval";
        let dir = self.stage_dir(stage)?;
        let tasks_path = self.require_input(&self.config.inputs.eval_tasks, "eval_tasks")?;
        let generations_path = self.require_input(&self.config.inputs.generations, "generations")?;
        let tasks: Vec<EvalTask> = read_jsonl_file(tasks_path)?;
        let generations: Vec<GenerationRecord> = read_jsonl_file(generations_path)?;
        if tasks.is_empty() {
            return Err(Error::EmptyInput("eval tasks"));
        }

        let mut by_task: BTreeMap<&str, &GenerationRecord> = BTreeMap::new();
        for generation in &generations {
            if by_task.insert(generation.task_id.as_str(), generation).is_some() {
                return Err(Error::invalid(
                    "generations",
                    format!("duplicate generation for task {}", generation.task_id),
                ));
            }
        }

        let mut runner = self
            .config
            .eval
            .runner
            .clone()
            .ok_or_else(|| Error::invalid("PipelineConfig", "eval.runner is required"))?;
        if runner.workdir.as_os_str().is_empty() {
            runner.workdir = dir.join("work");
        }
        runner.validate()?;

        let outcomes: Vec<EvalOutcome> = tasks
            .par_iter()
            .map(|task| {
                let generation = by_task.get(task.task_id.as_str()).ok_or_else(|| {
                    Error::invalid(
                        "generations",
                        format!("no generation for task {}", task.task_id),
                    )
                })?;
                let program = postprocess_generation(&task.prompt, &generation.raw_generation);
                run_task(&program, task, &runner)
            })
            .collect::<Result<Vec<_>>>()?;

        let metrics = aggregate_metrics(&outcomes)?;
        write_jsonl_file(&dir.join("results.jsonl"), &outcomes)?;
        let metrics_json = serde_json::json!({
            "total_tasks": metrics.total_tasks,
            "rates": metrics,
            "rendered": metrics.rendered(),
            "table_row": metrics.table_row(),
        });
        crate::manifest::write_atomic(
            &dir.join("metrics.json"),
            (serde_json::to_string_pretty(&metrics_json)? + "\n").as_bytes(),
        )?;

        let count_verdict = |verdict: Verdict| -> u64 {
            outcomes.iter().filter(|o| o.verdict == verdict).count() as u64
        };
        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("tasks", digest_file(tasks_path)?)
            .input("generations", digest_file(generations_path)?)
            .count("tasks", outcomes.len() as u64)
            .count("passed", count_verdict(Verdict::Passed))
            .count("test_failed", count_verdict(Verdict::TestFailed))
            .count("compile_error", count_verdict(Verdict::CompileError))
            .count("runtime_error", count_verdict(Verdict::RuntimeError))
            .count("timeout", count_verdict(Verdict::Timeout))
            .note("total_tasks", "data-driven from the task file, never hard-coded");
        manifest
            .output("results", &dir.join("results.jsonl"))?
            .output("metrics", &dir.join("metrics.json"))?;
        manifest.record_count = outcomes.len() as u64;
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: outcomes.len() as u64,
            stats: None,
            message: Some(metrics.table_row()),
            skipped: false,
        })
    }

    fn stage_complete_eval(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "complete-eval";
        let dir = self.stage_dir(stage)?;
        let holdout_path =
            self.require_input(&self.config.inputs.completion_holdout, "completion_holdout")?;
        let completions_path = self.require_input(&self.config.inputs.completions, "completions")?;
        let holdout: Vec<CompletionExample> = read_jsonl_file(holdout_path)?;
        let completions: Vec<CompletionResult> = read_jsonl_file(completions_path)?;
        let fraction = completion_exact_match(&holdout, &completions)?;
        let rendered = render_fraction(fraction);

        let payload = serde_json::json!({
            "examples": holdout.len(),
            "exact_match_fraction": fraction,
            "rendered": rendered,
        });
        crate::manifest::write_atomic(
            &dir.join("completion.json"),
            (serde_json::to_string_pretty(&payload)? + "\n").as_bytes(),
        )?;

        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("holdout", digest_file(holdout_path)?)
            .input("completions", digest_file(completions_path)?)
            .count("examples", holdout.len() as u64);
        manifest.output("completion", &dir.join("completion.json"))?;
        manifest.record_count = holdout.len() as u64;
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: holdout.len() as u64,
            stats: None,
            message: Some(rendered),
            skipped: false,
        })
    }

    fn stage_stats(&self, prev: Option<String>) -> Result<StageOutcome> {
        let stage = "stats";
        let dir = self.stage_dir(stage)?;
        let files_path = self.require_input(&self.config.inputs.files, "files")?;
        let repos_path = self.require_input(&self.config.inputs.repos, "repos")?;
        let records: Vec<FileRecord> = read_jsonl_file(files_path)?;
        let repos: Vec<RepoMeta> = read_jsonl_file(repos_path)?;
        let index = build_repo_index(repos)?;
        let stats = dataset_stats(&records, &index, &SimpleTokenizer)?;

        crate::manifest::write_atomic(
            &dir.join("stats.json"),
            (serde_json::to_string_pretty(&stats)? + "\n").as_bytes(),
        )?;

        let mut manifest = self.new_manifest(stage, prev);
        manifest
            .input("files", digest_file(files_path)?)
            .input("repos", digest_file(repos_path)?)
            .note("line_counting", "physical lines, blank lines included")
            .note(
                "tokens",
                "tokenizer-relative: whitespace-plus-punctuation splitter",
            );
        manifest.output("stats", &dir.join("stats.json"))?;
        manifest.record_count = records.len() as u64;
        manifest.stats = Some(stats);
        let digest = manifest.write(&self.manifest_path(stage))?;
        Ok(StageOutcome {
            stage: stage.to_string(),
            manifest_digest: digest,
            record_count: records.len() as u64,
            stats: Some(stats),
            message: Some(stats.render_row()),
            skipped: false,
        })
    }
}
