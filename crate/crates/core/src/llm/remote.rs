//! Remote client speaking the OpenAI-compatible chat-completion wire shape.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{estimate_tokens, Backend, Completion, GenerationParams};
use crate::error::{Error, Result};

pub const TOKEN_ENV_VAR: &str = "LAABENCH_API_TOKEN";
pub const ENDPOINT_ENV_VAR: &str = "LAABENCH_ENDPOINT";
pub const MODEL_ENV_VAR: &str = "LAABENCH_MODEL";
pub const TIMEOUT_ENV_VAR: &str = "LAABENCH_TIMEOUT_SECS";
pub const RETRIES_ENV_VAR: &str = "LAABENCH_MAX_RETRIES";
pub const CONCURRENCY_ENV_VAR: &str = "LAABENCH_CONCURRENCY";

/// Connection settings for the remote backend. The auth token is never read
/// from files; it comes exclusively from `LAABENCH_API_TOKEN`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub system_preamble: Option<String>,
    /// Base backoff delay; doubles on every retry. Milliseconds.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(skip)]
    pub api_token: Option<String>,
}

fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    250
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> RemoteConfig {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            concurrency: default_concurrency(),
            system_preamble: None,
            backoff_ms: default_backoff_ms(),
            api_token: None,
        }
    }

    /// Applies environment-variable overrides on top of the file values.
    pub fn with_env_overrides(mut self) -> Result<RemoteConfig> {
        if let Ok(v) = std::env::var(ENDPOINT_ENV_VAR) {
            self.endpoint = v;
        }
        if let Ok(v) = std::env::var(MODEL_ENV_VAR) {
            self.model = v;
        }
        if let Ok(v) = std::env::var(TIMEOUT_ENV_VAR) {
            self.timeout_secs = v
                .parse()
                .map_err(|_| Error::Config(format!("{TIMEOUT_ENV_VAR} must be an integer, got '{v}'")))?;
        }
        if let Ok(v) = std::env::var(RETRIES_ENV_VAR) {
            self.max_retries = v
                .parse()
                .map_err(|_| Error::Config(format!("{RETRIES_ENV_VAR} must be an integer, got '{v}'")))?;
        }
        if let Ok(v) = std::env::var(CONCURRENCY_ENV_VAR) {
            self.concurrency = v
                .parse()
                .map_err(|_| Error::Config(format!("{CONCURRENCY_ENV_VAR} must be an integer, got '{v}'")))?;
        }
        if let Ok(v) = std::env::var(TOKEN_ENV_VAR) {
            self.api_token = Some(v);
        }
        Ok(self)
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    stop: Vec<String>,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireResponseMessage,
}

#[derive(Deserialize)]
struct WireResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    permits: Mutex<usize>,
    cond: Condvar,
}

impl Gate {
    fn new(permits: usize) -> Gate {
        Gate { permits: Mutex::new(permits.max(1)), cond: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().unwrap();
        while *permits == 0 {
            permits = self.cond.wait(permits).unwrap();
        }
        *permits -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.permits.lock().unwrap() += 1;
        self.gate.cond.notify_one();
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
    retries_total: AtomicU64,
    id: String,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<RemoteBackend> {
        if config.endpoint.trim().is_empty() {
            return Err(Error::Config("remote backend needs an endpoint".into()));
        }
        if config.model.trim().is_empty() {
            return Err(Error::Config("remote backend needs a model name".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| Error::Config(format!("http client: {e}")))?;
        let id = format!("remote:{}", config.model);
        Ok(RemoteBackend { gate: Gate::new(config.concurrency), retries_total: AtomicU64::new(0), client, config, id })
    }

    /// Total retries performed since construction.
    pub fn retries_total(&self) -> u64 {
        self.retries_total.load(Ordering::Relaxed)
    }

    fn attempt(&self, prompt: &str, params: &GenerationParams) -> std::result::Result<Completion, Transient> {
        let mut messages = Vec::with_capacity(2);
        if let Some(preamble) = &self.config.system_preamble {
            messages.push(WireMessage { role: "system", content: preamble });
        }
        messages.push(WireMessage { role: "user", content: prompt });
        let body = WireRequest {
            model: &self.config.model,
            messages,
            temperature: params.temperature,
            max_tokens: params.max_new_tokens,
            stop: params.stop_sequences.clone(),
        };

        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.config.api_token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| Transient::Retry(format!("transport: {e}")))?;
        let status = response.status();
        let text = response.text().map_err(|e| Transient::Retry(format!("read body: {e}")))?;

        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Transient::Retry(format!("status {status}: {}", truncate(&text, 200))));
        }
        if !status.is_success() {
            // 4xx other than 429 is a content problem; never retried
            if looks_like_overflow(&text) {
                return Err(Transient::Fatal(Error::ContextOverflow(truncate(&text, 300))));
            }
            return Err(Transient::Fatal(Error::Backend(format!(
                "status {status}: {}",
                truncate(&text, 300)
            ))));
        }

        let parsed: WireResponse = serde_json::from_str(&text)
            .map_err(|e| Transient::Fatal(Error::Backend(format!("malformed response: {e}"))))?;
        let content = parsed
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .unwrap_or_default();
        let (prompt_tokens, completion_tokens) = match parsed.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => (estimate_tokens(prompt), estimate_tokens(&content)),
        };
        Ok(Completion { text: content, prompt_tokens, completion_tokens, backend_id: self.id.clone() })
    }
}

enum Transient {
    Retry(String),
    Fatal(Error),
}

fn looks_like_overflow(body: &str) -> bool {
    let lower = body.to_ascii_lowercase();
    lower.contains("context length") || lower.contains("context window") || lower.contains("maximum context")
}

fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        s.chars().take(max).collect()
    }
}

impl Backend for RemoteBackend {
    fn generate(&self, prompt: &str, params: &GenerationParams) -> Result<Completion> {
        if prompt.is_empty() {
            return Err(Error::Contract("empty prompt".into()));
        }
        let _permit = self.gate.acquire();
        let mut delay = Duration::from_millis(self.config.backoff_ms);
        let mut last_cause = String::new();
        for attempt in 0..=self.config.max_retries {
            match self.attempt(prompt, params) {
                Ok(completion) => return Ok(completion),
                Err(Transient::Fatal(err)) => return Err(err),
                Err(Transient::Retry(cause)) => {
                    last_cause = cause;
                    if attempt < self.config.max_retries {
                        self.retries_total.fetch_add(1, Ordering::Relaxed);
                        log::warn!(
                            "retry {}/{} after transient failure: {}",
                            attempt + 1,
                            self.config.max_retries,
                            last_cause
                        );
                        std::thread::sleep(delay);
                        delay = delay.saturating_mul(2);
                    }
                }
            }
        }
        Err(Error::Backend(format!(
            "gave up after {} retries: {last_cause}",
            self.config.max_retries
        )))
    }

    fn id(&self) -> &str {
        &self.id
    }
}
