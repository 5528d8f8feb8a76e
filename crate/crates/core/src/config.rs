//! Pipeline configuration: one JSON file, hashable and diff-able, with a
//! single top-level seed. Unknown keys are rejected everywhere. The only
//! environment interpolation is the API-key variable name, so secrets never
//! enter config files or manifests.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{FeatureConfig, TrainOptions};
use crate::dedup::MinHashConfig;
use crate::error::{Error, Result};
use crate::eval::{RunnerConfig, DEFAULT_PROMPT_PREAMBLE};
use crate::filter::FilterPolicy;
use crate::gateway::{HttpConfig, MockMode, PairPromptTemplate, RetryPolicy};
use crate::manifest::sha256_hex;
use crate::trainmath::OptimizerConfig;

/// Known stage names, in the default `run` order first.
pub const DEFAULT_RUN_STAGES: [&str; 5] = ["ingest", "dedup", "filter", "rank", "select"];
pub const ALL_STAGES: [&str; 9] = [
    "ingest",
    "dedup",
    "filter",
    "rank",
    "select",
    "translate",
    "eval",
    "complete-eval",
    "stats",
];

/// Input artifact paths. Each stage declares which of these it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repos: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_tasks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion_holdout: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completions: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation_jobs: Option<PathBuf>,
}

/// Quality-ranking stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityConfig {
    /// Cap on the ranked sample; the whole input when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_size: Option<usize>,
    #[serde(default = "default_label_fraction")]
    pub label_fraction: f64,
    #[serde(default = "default_select_k")]
    pub select_k: usize,
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub prompt: PairPromptTemplate,
}

fn default_label_fraction() -> f64 {
    0.05
}

fn default_select_k() -> usize {
    25_000
}

impl Default for QualityConfig {
    fn default() -> Self {
        QualityConfig {
            sample_size: None,
            label_fraction: default_label_fraction(),
            select_k: default_select_k(),
            train: TrainOptions::default(),
            features: FeatureConfig::default(),
            prompt: PairPromptTemplate::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
    Replay,
}

/// Backend wiring for oracle and translation calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_backend_kind")]
    pub backend: BackendKind,
    #[serde(default = "default_mock_mode")]
    pub mock_mode: MockMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub http: Option<HttpConfig>,
    /// Replay-log path for `backend = "replay"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_log: Option<PathBuf>,
    /// When set, every live exchange is appended here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_log: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_backend_kind() -> BackendKind {
    BackendKind::Mock
}

fn default_mock_mode() -> MockMode {
    MockMode::HashDerived
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            backend: default_backend_kind(),
            mock_mode: default_mock_mode(),
            http: None,
            replay_log: None,
            record_log: None,
            retry: RetryPolicy::default(),
        }
    }
}

/// Evaluation stage settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    #[serde(default = "default_prompt_preamble")]
    pub prompt_preamble: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runner: Option<RunnerConfig>,
}

fn default_prompt_preamble() -> String {
    DEFAULT_PROMPT_PREAMBLE.to_string()
}

/// Translation stage settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateConfig {
    #[serde(default = "default_translation_batch")]
    pub batch_size: usize,
}

fn default_translation_batch() -> usize {
    crate::gateway::DEFAULT_TRANSLATION_BATCH
}

impl Default for TranslateConfig {
    fn default() -> Self {
        TranslateConfig {
            batch_size: default_translation_batch(),
        }
    }
}

/// The whole pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Single source of all randomness; stages derive named sub-streams.
    pub seed: u64,
    #[serde(default = "default_dataset_name")]
    pub dataset_name: String,
    /// Stage order for `run`; defaults to ingest..select.
    #[serde(default)]
    pub stages: Vec<String>,
    #[serde(default)]
    pub inputs: InputPaths,
    /// Seeds inside nested sections are ignored; effective seeds always
    /// derive from the top-level seed.
    #[serde(default)]
    pub filter: FilterPolicy,
    #[serde(default)]
    pub minhash: MinHashConfig,
    #[serde(default)]
    pub quality: QualityConfig,
    #[serde(default)]
    pub gateway: GatewayConfig,
    #[serde(default)]
    pub eval: EvalSettings,
    #[serde(default)]
    pub translate: TranslateConfig,
    /// Stabilization hyperparameters for downstream trainers. Optional here,
    /// but weight decay and the clip threshold have no defaults, so declaring
    /// this section forces them to be chosen; the run manifest echoes them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
}

fn default_dataset_name() -> String {
    "dataset".to_string()
}

impl PipelineConfig {
    /// Parse and validate, returning the config plus the digest of the
    /// raw file bytes.
    pub fn load(path: &Path) -> Result<(PipelineConfig, String)> {
        let bytes = fs::read(path)?;
        let config: PipelineConfig = serde_json::from_slice(&bytes)
            .map_err(|e| Error::invalid("PipelineConfig", e.to_string()))?;
        config.validate()?;
        Ok((config, sha256_hex(&bytes)))
    }

    pub fn run_stages(&self) -> Vec<String> {
        if self.stages.is_empty() {
            DEFAULT_RUN_STAGES.iter().map(|s| s.to_string()).collect()
        } else {
            self.stages.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let known: BTreeSet<&str> = ALL_STAGES.into_iter().collect();
        for stage in &self.stages {
            if !known.contains(stage.as_str()) {
                return Err(Error::invalid(
                    "PipelineConfig",
                    format!("unknown stage {stage}"),
                ));
            }
        }
        self.filter.validate()?;
        self.minhash.validate()?;
        self.quality.features.validate()?;
        if let Some(optimizer) = &self.optimizer {
            optimizer.validate()?;
        }
        if !(self.quality.label_fraction > 0.0 && self.quality.label_fraction <= 1.0) {
            return Err(Error::invalid(
                "PipelineConfig",
                "quality.label_fraction must be in (0, 1]",
            ));
        }
        if self.quality.select_k == 0 {
            return Err(Error::invalid(
                "PipelineConfig",
                "quality.select_k must be >= 1",
            ));
        }
        if self.gateway.backend == BackendKind::Http && self.gateway.http.is_none() {
            return Err(Error::invalid(
                "PipelineConfig",
                "gateway.backend = http requires gateway.http settings",
            ));
        }
        if self.gateway.backend == BackendKind::Replay && self.gateway.replay_log.is_none() {
            return Err(Error::invalid(
                "PipelineConfig",
                "gateway.backend = replay requires gateway.replay_log",
            ));
        }
        // every stage that will run must have its input paths declared
        for stage in self.run_stages() {
            self.check_stage_inputs(&stage)?;
        }
        Ok(())
    }

    /// Config-level input requirements per stage. Artifact-level inputs
    /// (outputs of earlier stages) are resolved at run time.
    pub fn check_stage_inputs(&self, stage: &str) -> Result<()> {
        let need = |opt: &Option<PathBuf>, key: &str| -> Result<()> {
            if opt.is_none() {
                return Err(Error::invalid(
                    "PipelineConfig",
                    format!("stage {stage} requires inputs.{key}"),
                ));
            }
            Ok(())
        };
        match stage {
            "ingest" | "stats" => {
                need(&self.inputs.files, "files")?;
                need(&self.inputs.repos, "repos")?;
            }
            "eval" => {
                need(&self.inputs.eval_tasks, "eval_tasks")?;
                need(&self.inputs.generations, "generations")?;
                if self.eval.runner.is_none() {
                    return Err(Error::invalid(
                        "PipelineConfig",
                        "stage eval requires eval.runner",
                    ));
                }
            }
            "complete-eval" => {
                need(&self.inputs.completion_holdout, "completion_holdout")?;
                need(&self.inputs.completions, "completions")?;
            }
            "translate" => {
                need(&self.inputs.translation_jobs, "translation_jobs")?;
            }
            _ => {}
        }
        Ok(())
    }
}
