//! Contract with external chat-completion services: choice-token log-probs
//! and free-form completions, behind a [`ChatBackend`] trait with mock,
//! replay, recording, and HTTP implementations.
//!
//! Backends never mutate request texts. Live responses can be recorded to a
//! replay log so every experiment re-runs offline; replay lookups are keyed
//! by a hash of the canonical request and are order-free.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dedup::fnv1a;
use crate::error::{Error, Result};
use crate::quality::{PairwiseOracle, QualityItem};

/// A pairwise-comparison query: two texts fenced under choice tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub system_text: String,
    pub user_text: String,
    /// Ordered pair of choice tokens, conventionally `("A", "B")`.
    pub choice_tokens: (String, String),
    /// Always 0; scoring is greedy by construction.
    pub temperature: f64,
}

impl OracleRequest {
    pub fn new(
        system_text: impl Into<String>,
        user_text: impl Into<String>,
        choice_tokens: (String, String),
    ) -> Result<OracleRequest> {
        let request = OracleRequest {
            system_text: system_text.into(),
            user_text: user_text.into(),
            choice_tokens,
            temperature: 0.0,
        };
        request.validate()?;
        Ok(request)
    }

    /// Config-probe level validation of the single-token assumption: the
    /// choice tokens must be distinct, non-empty, and whitespace-free.
    pub fn validate(&self) -> Result<()> {
        let (a, b) = (&self.choice_tokens.0, &self.choice_tokens.1);
        if a.is_empty() || b.is_empty() || a == b {
            return Err(Error::invalid(
                "OracleRequest",
                "choice tokens must be distinct and non-empty",
            ));
        }
        if a.chars().any(char::is_whitespace) || b.chars().any(char::is_whitespace) {
            return Err(Error::invalid(
                "OracleRequest",
                "choice tokens must be single whitespace-free tokens",
            ));
        }
        if self.temperature != 0.0 {
            return Err(Error::invalid("OracleRequest", "temperature is fixed at 0"));
        }
        Ok(())
    }
}

/// The two choice-token log-probabilities from the first completion position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub logprob_a: f64,
    pub logprob_b: f64,
    /// Whatever the backend returned, kept for audit.
    pub raw_payload: serde_json::Value,
}

impl OracleResponse {
    /// Both log-probs must be finite and <= 0; anything else is degraded
    /// data and is never silently substituted.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("logprob_A", self.logprob_a), ("logprob_B", self.logprob_b)] {
            if !value.is_finite() {
                return Err(Error::DegradedData(format!("{name} is not finite")));
            }
            if value > 0.0 {
                return Err(Error::DegradedData(format!(
                    "{name} = {value} is a positive log-probability"
                )));
            }
        }
        Ok(())
    }
}

/// A chat-completion service.
pub trait ChatBackend: Send + Sync {
    /// Stable identity for cache keys and manifests.
    fn id(&self) -> String;

    /// Choice-token log-probs at the first completion position.
    fn choice_logprobs(&self, request: &OracleRequest) -> Result<OracleResponse>;

    /// Free-form completion of a system+user prompt.
    fn complete_text(&self, system_text: &str, user_text: &str) -> Result<String>;
}

/// Bounded exponential backoff for retriable failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub base_backoff_ms: u64,
}

fn default_max_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: default_max_attempts(),
            base_backoff_ms: default_backoff_ms(),
        }
    }
}

/// Run `operation` under the retry policy. Only transport failures retry;
/// degraded data fails immediately.
pub fn with_retry<T>(policy: &RetryPolicy, mut operation: impl FnMut() -> Result<T>) -> Result<T> {
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match operation() {
            Ok(value) => return Ok(value),
            Err(err) if err.is_retriable() && attempt < policy.max_attempts => {
                let backoff = policy.base_backoff_ms.saturating_mul(1 << (attempt - 1));
                if backoff > 0 {
                    std::thread::sleep(Duration::from_millis(backoff));
                }
            }
            Err(err) if err.is_retriable() => {
                return Err(Error::RetriesExhausted {
                    attempts: attempt,
                    last: err.to_string(),
                })
            }
            Err(err) => return Err(err),
        }
    }
}

/// Fetch choice log-probs with retry and response validation.
pub fn choice_logprobs(
    backend: &dyn ChatBackend,
    request: &OracleRequest,
    retry: &RetryPolicy,
) -> Result<OracleResponse> {
    request.validate()?;
    let response = with_retry(retry, || backend.choice_logprobs(request))?;
    response.validate()?;
    Ok(response)
}

// ---------------------------------------------------------------------------
// Mock backend
// ---------------------------------------------------------------------------

/// How the mock derives choice log-probs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockMode {
    /// Pure function of the request bytes: both log-probs derived from the
    /// FNV hash of `user_text`.
    HashDerived,
    /// Heuristic content quality: texts carrying a KDoc block (`/**`) score
    /// higher, with a per-position additive bias. Assumes the pair prompt
    /// layout of [`PairPromptTemplate`].
    KdocQuality,
}

/// Deterministic in-process backend: a pure function of the request bytes,
/// with optional fixture tables for exact values.
pub struct MockBackend {
    mode: MockMode,
    /// Overrides keyed by `fnv1a(user_text)`.
    logprob_table: HashMap<u64, (f64, f64)>,
    /// Completion overrides keyed by exact user text.
    completion_table: HashMap<String, String>,
}

impl MockBackend {
    pub fn new(mode: MockMode) -> MockBackend {
        MockBackend {
            mode,
            logprob_table: HashMap::new(),
            completion_table: HashMap::new(),
        }
    }

    pub fn with_logprob_entry(mut self, user_text: &str, logprobs: (f64, f64)) -> MockBackend {
        self.logprob_table.insert(fnv1a(user_text.as_bytes()), logprobs);
        self
    }

    pub fn with_completion(mut self, user_text: &str, completion: &str) -> MockBackend {
        self.completion_table
            .insert(user_text.to_string(), completion.to_string());
        self
    }

    fn hash_derived(user_text: &str) -> (f64, f64) {
        let h = fnv1a(user_text.as_bytes());
        let a = -0.001 - (h % 8000) as f64 / 1000.0;
        let b = -0.001 - ((h >> 13) % 8000) as f64 / 1000.0;
        (a, b)
    }

    /// Hidden quality used by [`MockMode::KdocQuality`]: a KDoc marker is
    /// worth four points, plus a small content-hash jitter for strict
    /// ordering. Always <= 0 after the base shift.
    fn kdoc_q(text: &str) -> f64 {
        let base = -5.0;
        let kdoc = if text.contains("/**") { 2.0 } else { -2.0 };
        let jitter = (fnv1a(text.as_bytes()) % 1000) as f64 / 2000.0;
        base + kdoc + jitter
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> String {
        format!("mock:{:?}", self.mode)
    }

    fn choice_logprobs(&self, request: &OracleRequest) -> Result<OracleResponse> {
        request.validate()?;
        let (logprob_a, logprob_b) =
            if let Some(&hit) = self.logprob_table.get(&fnv1a(request.user_text.as_bytes())) {
                hit
            } else {
                match self.mode {
                    MockMode::HashDerived => Self::hash_derived(&request.user_text),
                    MockMode::KdocQuality => {
                        let (first, second) = split_pair_sections(&request.user_text)?;
                        // additive form: q(file at position) + positional bias
                        (Self::kdoc_q(first) + BIAS_A, Self::kdoc_q(second) + BIAS_B)
                    }
                }
            };
        Ok(OracleResponse {
            logprob_a,
            logprob_b,
            raw_payload: serde_json::json!({"backend": "mock"}),
        })
    }

    fn complete_text(&self, _system_text: &str, user_text: &str) -> Result<String> {
        if let Some(canned) = self.completion_table.get(user_text) {
            return Ok(canned.clone());
        }
        let h = fnv1a(user_text.as_bytes());
        Ok(format!(
            "/**\n * Solves the exercise.\n */\nfun solution{h:04x}(): Int {{\n    return {}\n}}\n",
            h % 100
        ))
    }
}

const BIAS_A: f64 = -0.5;
const BIAS_B: f64 = -0.25;

// ---------------------------------------------------------------------------
// Pair prompt template and the oracle adapter
// ---------------------------------------------------------------------------

const SECTION_A: &str = "\nA:\n";
const SECTION_B: &str = "\n\nB:\n";
const SECTION_END: &str = "\n\nAnswer with the single token A or B.";

/// Prompt construction for pairwise comparisons. The default question asks
/// for greater educational value for learning algorithms in Kotlin; it is a
/// config value precisely so other prompts can be tried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairPromptTemplate {
    #[serde(default = "default_pair_system")]
    pub system_text: String,
    #[serde(default = "default_pair_question")]
    pub question: String,
}

fn default_pair_system() -> String {
    "You are a strict reviewer of Kotlin code quality.".to_string()
}

fn default_pair_question() -> String {
    "Which file has greater educational value for learning algorithms in Kotlin?".to_string()
}

impl Default for PairPromptTemplate {
    fn default() -> Self {
        PairPromptTemplate {
            system_text: default_pair_system(),
            question: default_pair_question(),
        }
    }
}

impl PairPromptTemplate {
    /// Build the ordered request: `first` is presented under token A,
    /// `second` under token B.
    pub fn build(&self, first: &str, second: &str) -> Result<OracleRequest> {
        OracleRequest::new(
            self.system_text.clone(),
            format!(
                "{}{SECTION_A}{first}{SECTION_B}{second}{SECTION_END}",
                self.question
            ),
            ("A".to_string(), "B".to_string()),
        )
    }
}

/// Recover the two file sections from a pair prompt. Mock-side parsing;
/// assumes file contents do not contain the section markers themselves.
fn split_pair_sections(user_text: &str) -> Result<(&str, &str)> {
    let a_start = user_text
        .find(SECTION_A)
        .ok_or_else(|| Error::invalid("pair prompt", "missing section A"))?
        + SECTION_A.len();
    let b_marker = user_text[a_start..]
        .find(SECTION_B)
        .ok_or_else(|| Error::invalid("pair prompt", "missing section B"))?
        + a_start;
    let b_start = b_marker + SECTION_B.len();
    let end = user_text
        .rfind(SECTION_END)
        .ok_or_else(|| Error::invalid("pair prompt", "missing section end"))?;
    Ok((&user_text[a_start..b_marker], &user_text[b_start..end]))
}

/// [`PairwiseOracle`] implementation that routes pair queries through a
/// chat backend.
pub struct GatewayOracle<'a> {
    backend: &'a dyn ChatBackend,
    template: PairPromptTemplate,
    retry: RetryPolicy,
}

impl<'a> GatewayOracle<'a> {
    pub fn new(
        backend: &'a dyn ChatBackend,
        template: PairPromptTemplate,
        retry: RetryPolicy,
    ) -> GatewayOracle<'a> {
        GatewayOracle {
            backend,
            template,
            retry,
        }
    }
}

impl PairwiseOracle for GatewayOracle<'_> {
    fn choice_logprobs(&self, first: &QualityItem, second: &QualityItem) -> Result<(f64, f64)> {
        let request = self.template.build(&first.content, &second.content)?;
        let response = choice_logprobs(self.backend, &request, &self.retry)?;
        Ok((response.logprob_a, response.logprob_b))
    }

    fn oracle_id(&self) -> String {
        let template_digest =
            hex::encode(&Sha256::digest(self.template.question.as_bytes())[..8]);
        format!("{}:{}", self.backend.id(), template_digest)
    }
}

// ---------------------------------------------------------------------------
// Replay log
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum WireRequest {
    ChoiceLogprobs {
        system_text: String,
        user_text: String,
        choice_tokens: (String, String),
        temperature: f64,
    },
    CompleteText {
        system_text: String,
        user_text: String,
    },
}

impl WireRequest {
    fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("wire request serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ReplayEntry {
    request_hash: String,
    request: WireRequest,
    response: serde_json::Value,
    timestamp: u64,
}

fn wire_choice(request: &OracleRequest) -> WireRequest {
    WireRequest::ChoiceLogprobs {
        system_text: request.system_text.clone(),
        user_text: request.user_text.clone(),
        choice_tokens: request.choice_tokens.clone(),
        temperature: request.temperature,
    }
}

/// Wrapper that appends every successful exchange to a replay log.
pub struct RecordingBackend<'a> {
    inner: &'a dyn ChatBackend,
    log: Mutex<File>,
}

impl<'a> RecordingBackend<'a> {
    pub fn create(inner: &'a dyn ChatBackend, path: &Path) -> Result<RecordingBackend<'a>> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RecordingBackend {
            inner,
            log: Mutex::new(file),
        })
    }

    fn append(&self, request: WireRequest, response: serde_json::Value) -> Result<()> {
        let entry = ReplayEntry {
            request_hash: request.hash(),
            request,
            response,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        };
        let mut log = self.log.lock().expect("replay log lock");
        writeln!(log, "{}", serde_json::to_string(&entry)?)?;
        Ok(())
    }
}

impl ChatBackend for RecordingBackend<'_> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn choice_logprobs(&self, request: &OracleRequest) -> Result<OracleResponse> {
        let response = self.inner.choice_logprobs(request)?;
        self.append(wire_choice(request), serde_json::to_value(&response)?)?;
        Ok(response)
    }

    fn complete_text(&self, system_text: &str, user_text: &str) -> Result<String> {
        let text = self.inner.complete_text(system_text, user_text)?;
        self.append(
            WireRequest::CompleteText {
                system_text: system_text.to_string(),
                user_text: user_text.to_string(),
            },
            serde_json::json!({ "text": text }),
        )?;
        Ok(text)
    }
}

/// Offline backend answering exclusively from a replay log.
pub struct ReplayBackend {
    responses: HashMap<String, serde_json::Value>,
    source: String,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<ReplayBackend> {
        let mut responses = HashMap::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ReplayEntry = serde_json::from_str(&line)?;
            responses.insert(entry.request_hash, entry.response);
        }
        Ok(ReplayBackend {
            responses,
            source: path.display().to_string(),
        })
    }

    fn lookup(&self, request: &WireRequest) -> Result<&serde_json::Value> {
        self.responses.get(&request.hash()).ok_or_else(|| {
            Error::invalid(
                "replay log",
                format!("no recorded response in {} for this request", self.source),
            )
        })
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> String {
        format!("replay:{}", self.source)
    }

    fn choice_logprobs(&self, request: &OracleRequest) -> Result<OracleResponse> {
        let value = self.lookup(&wire_choice(request))?;
        Ok(serde_json::from_value(value.clone())?)
    }

    fn complete_text(&self, system_text: &str, user_text: &str) -> Result<String> {
        let value = self.lookup(&WireRequest::CompleteText {
            system_text: system_text.to_string(),
            user_text: user_text.to_string(),
        })?;
        value
            .get("text")
            .and_then(|t| t.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::invalid("replay log", "entry has no text field"))
    }
}

// ---------------------------------------------------------------------------
// HTTP backend
// ---------------------------------------------------------------------------

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key; the key itself
    /// never appears in config files.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_requests_per_sec")]
    pub requests_per_sec: f64,
    #[serde(default = "default_completion_max_tokens")]
    pub completion_max_tokens: u32,
}

fn default_max_in_flight() -> usize {
    4
}
fn default_requests_per_sec() -> f64 {
    2.0
}
fn default_completion_max_tokens() -> u32 {
    1024
}

/// Token-bucket limiter; `acquire` blocks until a token is available.
struct TokenBucket {
    state: Mutex<(f64, Instant)>,
    capacity: f64,
    refill_per_sec: f64,
}

impl TokenBucket {
    fn new(rate: f64) -> TokenBucket {
        let capacity = rate.max(1.0);
        TokenBucket {
            state: Mutex::new((capacity, Instant::now())),
            capacity,
            refill_per_sec: rate.max(f64::MIN_POSITIVE),
        }
    }

    fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("token bucket lock");
                let now = Instant::now();
                let elapsed = now.duration_since(state.1).as_secs_f64();
                state.0 = (state.0 + elapsed * self.refill_per_sec).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.refill_per_sec)
            };
            std::thread::sleep(wait);
        }
    }
}

/// Counting semaphore capping concurrent requests.
struct InFlightGate {
    available: Mutex<usize>,
    signal: Condvar,
}

impl InFlightGate {
    fn new(limit: usize) -> InFlightGate {
        InFlightGate {
            available: Mutex::new(limit.max(1)),
            signal: Condvar::new(),
        }
    }

    fn enter(&self) -> InFlightTicket<'_> {
        let mut available = self.available.lock().expect("gate lock");
        while *available == 0 {
            available = self.signal.wait(available).expect("gate wait");
        }
        *available -= 1;
        InFlightTicket { gate: self }
    }
}

struct InFlightTicket<'a> {
    gate: &'a InFlightGate,
}

impl Drop for InFlightTicket<'_> {
    fn drop(&mut self) {
        *self.gate.available.lock().expect("gate lock") += 1;
        self.gate.signal.notify_one();
    }
}

/// JSON-over-HTTP chat-completions backend with log-prob support.
pub struct HttpBackend {
    config: HttpConfig,
    client: reqwest::blocking::Client,
    bucket: TokenBucket,
    gate: InFlightGate,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<HttpBackend> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let bucket = TokenBucket::new(config.requests_per_sec);
        let gate = InFlightGate::new(config.max_in_flight);
        Ok(HttpBackend {
            config,
            client,
            bucket,
            gate,
        })
    }

    fn api_key(&self) -> Result<Option<String>> {
        match &self.config.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| {
                Error::invalid("HttpConfig", format!("environment variable {var} is not set"))
            }),
        }
    }

    fn post(&self, body: serde_json::Value) -> Result<serde_json::Value> {
        let _ticket = self.gate.enter();
        self.bucket.acquire();
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = self.api_key()? {
            request = request.bearer_auth(key);
        }
        let response = request
            .send()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(Error::Transport(format!("HTTP {status}: {text}")));
        }
        response
            .json()
            .map_err(|e| Error::Transport(format!("invalid JSON body: {e}")))
    }
}

impl ChatBackend for HttpBackend {
    fn id(&self) -> String {
        format!("http:{}:{}", self.config.endpoint, self.config.model)
    }

    fn choice_logprobs(&self, request: &OracleRequest) -> Result<OracleResponse> {
        request.validate()?;
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": request.temperature,
            "max_tokens": 1,
            "logprobs": true,
            "top_logprobs": 20,
        });
        let payload = self.post(body)?;
        let top = payload
            .pointer("/choices/0/logprobs/content/0/top_logprobs")
            .and_then(|v| v.as_array())
            .ok_or_else(|| {
                Error::DegradedData("response carries no top_logprobs at position 0".to_string())
            })?;
        let find = |token: &str| -> Result<f64> {
            top.iter()
                .find(|entry| {
                    entry
                        .get("token")
                        .and_then(|t| t.as_str())
                        .map(|t| t.trim() == token)
                        .unwrap_or(false)
                })
                .and_then(|entry| entry.get("logprob").and_then(|l| l.as_f64()))
                .ok_or_else(|| {
                    Error::DegradedData(format!("choice token {token} not in top log-probs"))
                })
        };
        let response = OracleResponse {
            logprob_a: find(&request.choice_tokens.0)?,
            logprob_b: find(&request.choice_tokens.1)?,
            raw_payload: payload,
        };
        response.validate()?;
        Ok(response)
    }

    fn complete_text(&self, system_text: &str, user_text: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.config.model,
            "messages": [
                {"role": "system", "content": system_text},
                {"role": "user", "content": user_text},
            ],
            "temperature": 0.0,
            "max_tokens": self.config.completion_max_tokens,
        });
        let payload = self.post(body)?;
        payload
            .pointer("/choices/0/message/content")
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::DegradedData("response carries no message content".to_string()))
    }
}

// ---------------------------------------------------------------------------
// Exercise translation
// ---------------------------------------------------------------------------

pub const TRANSLATION_SYSTEM_TEXT: &str = "You are a helpful assistant.";
pub const TRANSLATION_USER_PREFIX: &str = "Rewrite to Kotlin (do not forget about docstring):\n\n";

/// Default batch size for translation runs.
pub const DEFAULT_TRANSLATION_BATCH: usize = 15_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Pending,
    Done,
    Rejected,
}

/// One Python-to-Kotlin exercise translation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationJob {
    pub source_task: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translated: Option<String>,
    pub status: JobStatus,
    #[serde(default)]
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
}

impl TranslationJob {
    pub fn new(source_task: impl Into<String>) -> TranslationJob {
        TranslationJob {
            source_task: source_task.into(),
            translated: None,
            status: JobStatus::Pending,
            attempts: 0,
            reject_reason: None,
        }
    }
}

impl crate::jsonl::JsonlRecord for TranslationJob {}

/// Translate one exercise. Accepted results must contain a `fun `
/// declaration and a doc comment; anything else is queued as rejected for
/// human review. Backend failures leave the job pending with an attempt
/// count.
pub fn translate_exercise(backend: &dyn ChatBackend, mut job: TranslationJob) -> TranslationJob {
    if job.source_task.is_empty() {
        job.status = JobStatus::Rejected;
        job.reject_reason = Some("empty source task".to_string());
        return job;
    }
    job.attempts += 1;
    let user_text = format!("{TRANSLATION_USER_PREFIX}{}", job.source_task);
    let text = match backend.complete_text(TRANSLATION_SYSTEM_TEXT, &user_text) {
        Ok(text) => text,
        Err(_) => {
            job.status = JobStatus::Pending;
            return job;
        }
    };
    if !text.contains("fun ") {
        job.status = JobStatus::Rejected;
        job.reject_reason = Some("no function declaration".to_string());
        return job;
    }
    if !text.contains("/**") && !text.contains("///") {
        job.status = JobStatus::Rejected;
        job.reject_reason = Some("no doc comment".to_string());
        return job;
    }
    job.translated = Some(text);
    job.status = JobStatus::Done;
    job.reject_reason = None;
    job
}
