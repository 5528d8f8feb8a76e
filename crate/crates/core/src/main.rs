//! `kotcorpus`: corpus curation and evaluation pipeline CLI.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use kotcorpus::config::PipelineConfig;
use kotcorpus::pipeline::RunContext;

#[derive(Parser)]
#[command(name = "kotcorpus", version, about = "Kotlin corpus curation and evaluation pipeline")]
struct Cli {
    /// Pipeline config file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Run directory; defaults to runs/<timestamp>-<config-digest>.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Skip stages whose manifest already matches this config.
    #[arg(long, global = true)]
    resume: bool,

    /// Validate the config and print the stage plan without writing.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Read and verify input records, write normalized artifacts and stats.
    Ingest,
    /// Repo filters, exact dedup, and MinHash/LSH near-dedup.
    Dedup,
    /// File filters, package/import cleaning, and PII redaction.
    Filter,
    /// Pairwise three-pass quality ranking, labels, and classifier training.
    Rank,
    /// Apply the trained classifier and keep the top-k records.
    Select,
    /// Translate exercise jobs through the configured backend.
    Translate,
    /// Post-process generations, execute tasks, and print the metrics row.
    Eval,
    /// Score completion exact-match on a holdout.
    CompleteEval,
    /// Dataset descriptive statistics.
    Stats,
    /// Execute the configured stage sequence (or one stage via --stage).
    Run {
        #[arg(long)]
        stage: Option<String>,
    },
}

fn error_report(kind: &str, error: &dyn std::fmt::Display) -> String {
    serde_json::json!({ "error": error.to_string(), "kind": kind }).to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let config_path = match &cli.config {
        Some(path) => path.clone(),
        None => {
            eprintln!("{}", error_report("config", &"--config PATH is required"));
            return ExitCode::from(2);
        }
    };
    let (config, config_digest) = match PipelineConfig::load(&config_path) {
        Ok(loaded) => loaded,
        Err(error) => {
            eprintln!("{}", error_report("config", &error));
            return ExitCode::from(2);
        }
    };

    let stages: Vec<String> = match &cli.command {
        Cmd::Ingest => vec!["ingest".into()],
        Cmd::Dedup => vec!["dedup".into()],
        Cmd::Filter => vec!["filter".into()],
        Cmd::Rank => vec!["rank".into()],
        Cmd::Select => vec!["select".into()],
        Cmd::Translate => vec!["translate".into()],
        Cmd::Eval => vec!["eval".into()],
        Cmd::CompleteEval => vec!["complete-eval".into()],
        Cmd::Stats => vec!["stats".into()],
        Cmd::Run { stage: Some(name) } => vec![name.clone()],
        Cmd::Run { stage: None } => config.run_stages(),
    };
    for stage in &stages {
        if let Err(error) = config.check_stage_inputs(stage) {
            eprintln!("{}", error_report("config", &error));
            return ExitCode::from(2);
        }
    }

    let out_dir = cli.out_dir.clone().unwrap_or_else(|| {
        let ts = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let short = &config_digest[..12.min(config_digest.len())];
        PathBuf::from("runs").join(format!("{ts}-{short}"))
    });

    if cli.dry_run {
        let plan = serde_json::json!({
            "config": config_path,
            "config_digest": config_digest,
            "out_dir": out_dir,
            "stages": stages,
            "seed": config.seed,
        });
        println!("{}", serde_json::to_string_pretty(&plan).expect("plan serializes"));
        return ExitCode::SUCCESS;
    }

    if let Err(error) = std::fs::create_dir_all(&out_dir) {
        eprintln!("{}", error_report("io", &error));
        return ExitCode::FAILURE;
    }

    let full_run = matches!(cli.command, Cmd::Run { stage: None });
    let context = RunContext::new(config, config_digest, out_dir, cli.resume);
    let result = if full_run {
        context.run_all().map(|outcomes| {
            for outcome in &outcomes {
                report(outcome);
            }
        })
    } else {
        let mut prev = None;
        let mut failure = None;
        for stage in &stages {
            match context.run_stage(stage, prev.take()) {
                Ok(outcome) => {
                    report(&outcome);
                    prev = Some(outcome.manifest_digest.clone());
                }
                Err(error) => {
                    failure = Some(error);
                    break;
                }
            }
        }
        match failure {
            Some(error) => Err(error),
            None => Ok(()),
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("{}", error_report("runtime", &error));
            ExitCode::FAILURE
        }
    }
}

fn report(outcome: &kotcorpus::pipeline::StageOutcome) {
    if outcome.skipped {
        eprintln!("[{}] resumed from existing manifest", outcome.stage);
        return;
    }
    eprintln!(
        "[{}] records={} manifest={}",
        outcome.stage,
        outcome.record_count,
        &outcome.manifest_digest[..12.min(outcome.manifest_digest.len())]
    );
    if let Some(message) = &outcome.message {
        println!("{message}");
    }
}
