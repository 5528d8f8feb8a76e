//! Crate-wide error type.

/// Errors produced by the corpus pipeline and evaluation harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A JSONL line failed to parse. Line numbers are 1-based.
    #[error("line {line}: malformed record: {source}")]
    MalformedLine {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    /// A stored content hash does not match the hash of the content bytes.
    #[error("line {line}: {path}: content_hash {stored} does not match computed {computed}")]
    HashMismatch {
        line: usize,
        path: String,
        stored: String,
        computed: String,
    },

    /// A record references a repo_id absent from the repo index.
    #[error("record {path}: unknown repo_id {repo_id}")]
    UnknownRepo { path: String, repo_id: String },

    /// A domain or configuration value failed validation.
    #[error("invalid {what}: {why}")]
    Invalid { what: &'static str, why: String },

    /// An operation that requires input received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// A transport-level backend failure; retriable.
    #[error("backend transport failure: {0}")]
    Transport(String),

    /// A backend request failed after exhausting the retry budget.
    #[error("backend request failed after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },

    /// The backend answered, but the data is unusable (non-finite or missing
    /// log-probs). Never silently substituted; never retried.
    #[error("degraded oracle data: {0}")]
    DegradedData(String),

    /// Classifier training needs at least one example of each class.
    #[error("training data contains a single class")]
    SingleClass,

    /// Paired inputs have different lengths.
    #[error("length mismatch: {left} expected entries vs {right} provided")]
    LengthMismatch { left: usize, right: usize },

    /// The runner itself is misconfigured (missing binary, bad template).
    /// Distinct from any task verdict.
    #[error("runner configuration: {0}")]
    RunnerConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(what: &'static str, why: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            why: why.into(),
        }
    }

    /// True for failures worth retrying with backoff.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
