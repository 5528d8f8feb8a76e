//! HumanEval-style evaluation for Kotlin: generation post-processing,
//! external compile/run execution with wall-clock timeouts, five-outcome
//! verdict classification, metric aggregation, and completion exact-match.
//!
//! Generation itself is out of process: the harness consumes raw generations
//! from JSONL, so any model or server can produce them.

use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl::JsonlRecord;
use crate::lex::strip_comments;

/// Default instruction preamble for generation prompts. The full text used
/// upstream is not fixed; it is a config value seeded with the visible
/// fragment.
pub const DEFAULT_PROMPT_PREAMBLE: &str = "You are an expert Kotlin programmer...";

/// Early-stopping sequence that ends a Kotlin method under the usual coding
/// conventions.
pub const STOP_SEQUENCE: &str = "\n}\n";

/// One benchmark task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalTask {
    pub task_id: String,
    /// Instruction preamble + function signature + docstring.
    pub prompt: String,
    /// Test program exercising the solution.
    pub test_source: String,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: f64,
}

fn default_timeout_s() -> f64 {
    15.0
}

impl EvalTask {
    pub fn validate(&self) -> Result<()> {
        if self.prompt.is_empty() || self.test_source.is_empty() {
            return Err(Error::invalid("EvalTask", "prompt and test_source required"));
        }
        if !self.timeout_s.is_finite() || self.timeout_s <= 0.0 {
            return Err(Error::invalid("EvalTask", "timeout_s must be > 0"));
        }
        Ok(())
    }
}

impl JsonlRecord for EvalTask {
    fn finalize(self, line: usize) -> Result<Self> {
        self.validate().map_err(|e| match e {
            Error::Invalid { what, why } => Error::Invalid {
                what,
                why: format!("line {line}: {why}"),
            },
            other => other,
        })?;
        Ok(self)
    }
}

/// A raw model generation for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub task_id: String,
    pub raw_generation: String,
}

impl JsonlRecord for GenerationRecord {}

/// Classified execution result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Passed,
    TestFailed,
    CompileError,
    RuntimeError,
    Timeout,
}

pub const ALL_VERDICTS: [Verdict; 5] = [
    Verdict::Passed,
    Verdict::TestFailed,
    Verdict::CompileError,
    Verdict::RuntimeError,
    Verdict::Timeout,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub task_id: String,
    pub verdict: Verdict,
    /// Captured diagnostics tail.
    pub detail: String,
}

impl JsonlRecord for EvalOutcome {}

/// Post-process a raw generation against its prompt:
///
/// 1. truncate at the first `"\n}\n"`, keeping the `"\n}"`;
/// 2. strip comments;
/// 3. when some line's trimmed form starts with `fun `, drop it and every
///    line before it (models often restate the prompt's signature);
/// 4. concatenate prompt + processed remainder.
pub fn postprocess_generation(prompt: &str, raw_generation: &str) -> String {
    let truncated = match raw_generation.find(STOP_SEQUENCE) {
        Some(pos) => &raw_generation[..pos + 2],
        None => raw_generation,
    };
    let stripped = strip_comments(truncated);
    let lines: Vec<&str> = stripped.split('\n').collect();
    let remainder = match lines
        .iter()
        .position(|line| line.trim_start().starts_with("fun "))
    {
        Some(idx) => lines[idx + 1..].join("\n"),
        None => stripped.clone(),
    };
    format!("{prompt}{remainder}")
}

/// Compile/run command templates. Every template must mention the
/// `{program}` placeholder, which expands to the program file path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunnerConfig {
    pub compile_cmd: Vec<String>,
    pub run_cmd: Vec<String>,
    pub workdir: PathBuf,
    /// Environment variables forwarded to the child; PATH always passes.
    #[serde(default)]
    pub env_passthrough: Vec<String>,
    /// Diagnostics substrings that mark a test failure rather than a
    /// runtime error.
    #[serde(default = "default_assertion_signatures")]
    pub assertion_signatures: Vec<String>,
}

fn default_assertion_signatures() -> Vec<String> {
    vec![
        "java.lang.AssertionError".to_string(),
        "AssertionFailedError".to_string(),
    ]
}

pub const PROGRAM_PLACEHOLDER: &str = "{program}";

impl RunnerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, cmd) in [("compile_cmd", &self.compile_cmd), ("run_cmd", &self.run_cmd)] {
            if cmd.is_empty() {
                return Err(Error::RunnerConfig(format!("{name} is empty")));
            }
            if !cmd.iter().any(|arg| arg.contains(PROGRAM_PLACEHOLDER)) {
                return Err(Error::RunnerConfig(format!(
                    "{name} lacks the {PROGRAM_PLACEHOLDER} placeholder"
                )));
            }
        }
        Ok(())
    }

    fn expand(template: &[String], program: &str) -> Vec<String> {
        template
            .iter()
            .map(|arg| arg.replace(PROGRAM_PLACEHOLDER, program))
            .collect()
    }
}

fn tail(text: &str, max: usize) -> String {
    if text.len() <= max {
        return text.to_string();
    }
    let mut start = text.len() - max;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

struct CommandOutput {
    status_code: Option<i32>,
    timed_out: bool,
    combined: String,
}

/// Spawn a command with stdout/stderr captured to files (no pipe deadlock)
/// and a wall-clock deadline enforced by the caller, not the runner.
fn run_command(
    args: &[String],
    dir: &std::path::Path,
    env_passthrough: &[String],
    timeout: Option<Duration>,
) -> Result<CommandOutput> {
    let stdout_path = dir.join(".stdout");
    let stderr_path = dir.join(".stderr");
    let stdout_file = fs::File::create(&stdout_path)?;
    let stderr_file = fs::File::create(&stderr_path)?;

    let mut command = Command::new(&args[0]);
    command
        .args(&args[1..])
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(Stdio::from(stdout_file))
        .stderr(Stdio::from(stderr_file));
    command.env_clear();
    if let Ok(path) = std::env::var("PATH") {
        command.env("PATH", path);
    }
    for var in env_passthrough {
        if let Ok(value) = std::env::var(var) {
            command.env(var, value);
        }
    }

    let mut child = command.spawn().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::RunnerConfig(format!("runner binary not found: {}", args[0]))
        } else {
            Error::Io(e)
        }
    })?;

    let started = Instant::now();
    let (status_code, timed_out) = loop {
        match child.try_wait()? {
            Some(status) => break (status.code(), false),
            None => {
                if let Some(limit) = timeout {
                    if started.elapsed() >= limit {
                        let _ = child.kill();
                        let _ = child.wait();
                        break (None, true);
                    }
                }
                std::thread::sleep(Duration::from_millis(10));
            }
        }
    };

    let mut combined = String::new();
    for path in [&stdout_path, &stderr_path] {
        if let Ok(mut file) = fs::File::open(path) {
            let _ = file.read_to_string(&mut combined);
        }
    }
    let _ = fs::remove_file(&stdout_path);
    let _ = fs::remove_file(&stderr_path);
    Ok(CommandOutput {
        status_code,
        timed_out,
        combined,
    })
}

/// Execute one program against a task: compile, then run under the task's
/// wall-clock budget, and classify the result.
///
/// The program file handed to the runner is the post-processed solution
/// followed by the task's test source. A missing runner binary is a
/// configuration error, distinct from every verdict.
pub fn run_task(program_text: &str, task: &EvalTask, runner: &RunnerConfig) -> Result<EvalOutcome> {
    task.validate()?;
    runner.validate()?;
    // sanitized id plus a digest suffix so distinct task ids never share a
    // sandbox directory
    let sanitized: String = task
        .task_id
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    let digest = crate::record::content_digest(task.task_id.as_bytes());
    let dir = runner.workdir.join(format!("{sanitized}-{}", &digest[..8]));
    fs::create_dir_all(&dir)?;
    // the child runs with the task dir as CWD, so the substituted program
    // path must stay valid from there: absolutize it
    let dir = dir.canonicalize()?;
    let program_path = dir.join("program.kt");
    fs::write(&program_path, format!("{program_text}\n{}", task.test_source))?;
    let program = program_path
        .to_str()
        .ok_or_else(|| Error::RunnerConfig("non-UTF-8 workdir path".to_string()))?
        .to_string();

    let compile = run_command(
        &RunnerConfig::expand(&runner.compile_cmd, &program),
        &dir,
        &runner.env_passthrough,
        None,
    )?;
    if compile.status_code != Some(0) {
        return Ok(EvalOutcome {
            task_id: task.task_id.clone(),
            verdict: Verdict::CompileError,
            detail: tail(&compile.combined, 2000),
        });
    }

    let run = run_command(
        &RunnerConfig::expand(&runner.run_cmd, &program),
        &dir,
        &runner.env_passthrough,
        Some(Duration::from_secs_f64(task.timeout_s)),
    )?;
    let verdict = if run.timed_out {
        Verdict::Timeout
    } else if run.status_code == Some(0) {
        Verdict::Passed
    } else if runner
        .assertion_signatures
        .iter()
        .any(|sig| run.combined.contains(sig.as_str()))
    {
        Verdict::TestFailed
    } else {
        Verdict::RuntimeError
    };
    let detail = if run.timed_out {
        format!("wall clock exceeded {}s", task.timeout_s)
    } else {
        tail(&run.combined, 2000)
    };
    Ok(EvalOutcome {
        task_id: task.task_id.clone(),
        verdict,
        detail,
    })
}

/// Aggregated rates, all percentages of `total_tasks`.
///
/// The five primary rates partition the outcomes; `syntax_error_rate` is the
/// unrounded sum of the compilation and runtime rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub pass_rate: f64,
    pub test_fail_rate: f64,
    pub compile_error_rate: f64,
    pub runtime_error_rate: f64,
    pub oot_rate: f64,
    pub syntax_error_rate: f64,
    pub total_tasks: usize,
}

/// Two-decimal renderings of the rates, the form reports print.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedEvalMetrics {
    pub pass_rate: String,
    pub test_fail_rate: String,
    pub compile_error_rate: String,
    pub runtime_error_rate: String,
    pub oot_rate: String,
    pub syntax_error_rate: String,
}

impl EvalMetrics {
    pub fn rendered(&self) -> RenderedEvalMetrics {
        let r = |x: f64| format!("{x:.2}");
        RenderedEvalMetrics {
            pass_rate: r(self.pass_rate),
            test_fail_rate: r(self.test_fail_rate),
            compile_error_rate: r(self.compile_error_rate),
            runtime_error_rate: r(self.runtime_error_rate),
            oot_rate: r(self.oot_rate),
            syntax_error_rate: r(self.syntax_error_rate),
        }
    }

    /// Report row in column order: pass, test fail, compile error, runtime
    /// error, out-of-time, then syntax error after the separator.
    pub fn table_row(&self) -> String {
        let r = self.rendered();
        format!(
            "{} {} {} {} {} | {}",
            r.pass_rate,
            r.test_fail_rate,
            r.compile_error_rate,
            r.runtime_error_rate,
            r.oot_rate,
            r.syntax_error_rate
        )
    }
}

/// Aggregate verdicts into rates.
pub fn aggregate_metrics(outcomes: &[EvalOutcome]) -> Result<EvalMetrics> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput("outcomes"));
    }
    let total = outcomes.len() as f64;
    let count = |verdict: Verdict| -> f64 {
        outcomes.iter().filter(|o| o.verdict == verdict).count() as f64
    };
    let rate = |verdict: Verdict| 100.0 * count(verdict) / total;
    let compile_error_rate = rate(Verdict::CompileError);
    let runtime_error_rate = rate(Verdict::RuntimeError);
    Ok(EvalMetrics {
        pass_rate: rate(Verdict::Passed),
        test_fail_rate: rate(Verdict::TestFailed),
        compile_error_rate,
        runtime_error_rate,
        oot_rate: rate(Verdict::Timeout),
        syntax_error_rate: compile_error_rate + runtime_error_rate,
        total_tasks: outcomes.len(),
    })
}

/// One holdout completion example: the context's expected next line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionExample {
    pub id: String,
    pub expected_next_line: String,
}

impl JsonlRecord for CompletionExample {}

/// A model's completion for one holdout example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub id: String,
    pub generation: String,
}

impl JsonlRecord for CompletionResult {}

/// Fraction of examples whose first generated line equals the expected line,
/// trailing whitespace trimmed on both sides of the comparison.
pub fn completion_exact_match(
    holdout: &[CompletionExample],
    completions: &[CompletionResult],
) -> Result<f64> {
    if holdout.len() != completions.len() {
        return Err(Error::LengthMismatch {
            left: holdout.len(),
            right: completions.len(),
        });
    }
    if holdout.is_empty() {
        return Err(Error::EmptyInput("completion holdout"));
    }
    let mut matches = 0usize;
    for (example, result) in holdout.iter().zip(completions) {
        if example.id != result.id {
            return Err(Error::invalid(
                "completions",
                format!("id {} does not align with holdout id {}", result.id, example.id),
            ));
        }
        let first_line = result.generation.split('\n').next().unwrap_or("");
        if first_line.trim_end() == example.expected_next_line.trim_end() {
            matches += 1;
        }
    }
    Ok(matches as f64 / holdout.len() as f64)
}

/// Three-decimal rendering used by completion reports, e.g. `0.388`.
pub fn render_fraction(fraction: f64) -> String {
    format!("{fraction:.3}")
}

/// The stub runner protocol: a program file is scanned for verdict markers
/// mapped to exit behaviors.
///
/// | marker | compile step | run step |
/// |---|---|---|
/// | `//VERDICT:COMPILE_ERROR` | exit 2, `error: forced compile failure` on stderr | n/a |
/// | `//VERDICT:TEST_FAILED` | exit 0 | exit 1, `Exception in thread "main" java.lang.AssertionError: forced test failure` on stderr |
/// | `//VERDICT:RUNTIME_ERROR` | exit 0 | exit 1, `Exception in thread "main" kotlin.NotImplementedError: An operation is not implemented.` on stderr |
/// | `//VERDICT:SLEEP_<N>` | exit 0 | sleep `N` seconds, then exit 0 |
/// | `//VERDICT:PASS` or no marker | exit 0 | exit 0 |
///
/// Run-step markers are checked in the order TEST_FAILED, RUNTIME_ERROR,
/// SLEEP.
pub mod stub {
    pub const COMPILE_ERROR: &str = "//VERDICT:COMPILE_ERROR";
    pub const TEST_FAILED: &str = "//VERDICT:TEST_FAILED";
    pub const RUNTIME_ERROR: &str = "//VERDICT:RUNTIME_ERROR";
    pub const PASS: &str = "//VERDICT:PASS";
    pub const SLEEP_PREFIX: &str = "//VERDICT:SLEEP_";

    pub const COMPILE_ERROR_DIAGNOSTIC: &str = "error: forced compile failure";
    pub const TEST_FAILED_DIAGNOSTIC: &str =
        "Exception in thread \"main\" java.lang.AssertionError: forced test failure";
    pub const RUNTIME_ERROR_DIAGNOSTIC: &str =
        "Exception in thread \"main\" kotlin.NotImplementedError: An operation is not implemented.";

    /// Behavior of one stub step: optional sleep, then exit with a code
    /// after printing `stderr`.
    #[derive(Debug, Clone, PartialEq)]
    pub struct StepBehavior {
        pub sleep_secs: u64,
        pub exit_code: i32,
        pub stderr: Option<&'static str>,
    }

    pub fn compile_step(program_text: &str) -> StepBehavior {
        if program_text.contains(COMPILE_ERROR) {
            StepBehavior {
                sleep_secs: 0,
                exit_code: 2,
                stderr: Some(COMPILE_ERROR_DIAGNOSTIC),
            }
        } else {
            StepBehavior {
                sleep_secs: 0,
                exit_code: 0,
                stderr: None,
            }
        }
    }

    pub fn run_step(program_text: &str) -> StepBehavior {
        if program_text.contains(TEST_FAILED) {
            return StepBehavior {
                sleep_secs: 0,
                exit_code: 1,
                stderr: Some(TEST_FAILED_DIAGNOSTIC),
            };
        }
        if program_text.contains(RUNTIME_ERROR) {
            return StepBehavior {
                sleep_secs: 0,
                exit_code: 1,
                stderr: Some(RUNTIME_ERROR_DIAGNOSTIC),
            };
        }
        if let Some(pos) = program_text.find(SLEEP_PREFIX) {
            let digits: String = program_text[pos + SLEEP_PREFIX.len()..]
                .chars()
                .take_while(char::is_ascii_digit)
                .collect();
            if let Ok(secs) = digits.parse::<u64>() {
                return StepBehavior {
                    sleep_secs: secs,
                    exit_code: 0,
                    stderr: None,
                };
            }
        }
        StepBehavior {
            sleep_secs: 0,
            exit_code: 0,
            stderr: None,
        }
    }
}
