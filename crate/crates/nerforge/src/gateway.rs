//! Client for OpenAI-compatible chat-completion endpoints.
//!
//! Three modes: `Live` talks to the endpoint, `Replay` serves recorded
//! responses from a cassette and never touches the network, `Record` does
//! both. Cassettes are JSONL keyed by a content-addressed fingerprint of
//! (model, temperature, max_tokens, prompt text), so editing a prompt
//! template invalidates exactly the affected entries.
//!
//! Every request is a fresh single-user-message exchange; there is no
//! system message, streaming, or multi-turn state.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompts::PromptSpec;

/// Environment variable holding the API key for live/record mode.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";
/// Environment variable overriding the default endpoint base URL.
pub const BASE_URL_ENV: &str = "OPENAI_BASE_URL";
/// Default endpoint when no override is configured.
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// Request parameters sent with every completion.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            model: "gpt-3.5-turbo".to_string(),
            temperature: 0.0,
            max_tokens: 2048,
            timeout: Duration::from_secs(60),
            max_retries: 3,
        }
    }
}

impl GenerationConfig {
    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.clamp(0.0, 2.0);
        self
    }
}

/// Token usage as reported by the endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

/// One completion, live or replayed.
#[derive(Debug, Clone, PartialEq)]
pub struct RawResponse {
    pub content: String,
    pub model: String,
    pub request_fingerprint: String,
    pub usage: Option<Usage>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport failure (status {status}): {body}")]
    Transport { status: u16, body: String },
    #[error("rate limited by endpoint (retry-after: {retry_after:?})")]
    RateLimited { retry_after: Option<f64> },
    #[error("cassette has no entry for fingerprint {0}")]
    CassetteMiss(String),
    #[error("no API key: set {API_KEY_ENV} for live or record mode")]
    MissingApiKey,
    #[error("cassette i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("cassette line {0} is not valid JSON: {1}")]
    CassetteFormat(usize, String),
}

/// Content-addressed key for one request: everything that shapes the
/// completion goes in.
pub fn fingerprint(prompt_text: &str, config: &GenerationConfig) -> String {
    let mut h = Sha256::new();
    h.update(config.model.as_bytes());
    h.update([0x1f]);
    h.update(format!("{}", config.temperature).as_bytes());
    h.update([0x1f]);
    h.update(format!("{}", config.max_tokens).as_bytes());
    h.update([0x1f]);
    h.update(prompt_text.as_bytes());
    hex::encode(h.finalize())
}

fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

/// One recorded exchange. `prompt_sha` hashes the prompt text alone so a
/// human diffing the cassette can spot which prompt changed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub prompt_sha: String,
    pub model: String,
    pub temperature: f64,
    pub content: String,
}

/// JSONL store of recorded responses.
#[derive(Debug, Default)]
pub struct Cassette {
    entries: HashMap<String, CassetteEntry>,
    path: Option<PathBuf>,
}

impl Cassette {
    pub fn in_memory() -> Self {
        Cassette::default()
    }

    /// Opens (or creates) a cassette backed by a file; appends persist.
    pub fn at_path(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let mut cassette = Cassette {
            entries: HashMap::new(),
            path: Some(path.clone()),
        };
        if path.exists() {
            cassette.load_from(&path)?;
        }
        Ok(cassette)
    }

    /// Loads an existing cassette read-only (replay mode).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let mut cassette = Cassette::default();
        cassette.load_from(path.as_ref())?;
        Ok(cassette)
    }

    fn load_from(&mut self, path: &Path) -> Result<(), GatewayError> {
        let file = File::open(path)?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line)
                .map_err(|e| GatewayError::CassetteFormat(i + 1, e.to_string()))?;
            self.entries.insert(entry.fingerprint.clone(), entry);
        }
        Ok(())
    }

    pub fn get(&self, fingerprint: &str) -> Option<&CassetteEntry> {
        self.entries.get(fingerprint)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts an entry, appending to the backing file when present.
    /// Re-recording an existing fingerprint is a no-op: the first recorded
    /// response stays authoritative so replays are stable.
    pub fn append(&mut self, entry: CassetteEntry) -> Result<(), GatewayError> {
        if self.entries.contains_key(&entry.fingerprint) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let line = serde_json::to_string(&entry).expect("entry serializes");
            writeln!(f, "{line}")?;
        }
        self.entries.insert(entry.fingerprint.clone(), entry);
        Ok(())
    }

    /// Convenience for recording a prompt/response pair.
    pub fn record(
        &mut self,
        prompt_text: &str,
        config: &GenerationConfig,
        content: &str,
    ) -> Result<String, GatewayError> {
        let fp = fingerprint(prompt_text, config);
        self.append(CassetteEntry {
            fingerprint: fp.clone(),
            prompt_sha: sha256_hex(prompt_text.as_bytes()),
            model: config.model.clone(),
            temperature: config.temperature,
            content: content.to_string(),
        })?;
        Ok(fp)
    }
}

/// Anything that can answer a prompt. The pipeline depends on this trait so
/// tests can script completions without a gateway.
pub trait CompletionSource: Sync {
    fn complete(
        &self,
        prompt: &PromptSpec,
        config: &GenerationConfig,
    ) -> Result<RawResponse, GatewayError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMode {
    Live,
    Record,
    Replay,
}

/// Counting semaphore bounding in-flight requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn new(n: usize) -> Self {
        Slots {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard { slots: self }
    }
}

struct SlotGuard<'a> {
    slots: &'a Slots,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut free = self.slots.free.lock().unwrap();
        *free += 1;
        self.slots.cv.notify_one();
    }
}

/// Sliding-window requests-per-minute accounting.
struct RateWindow {
    stamps: std::collections::VecDeque<Instant>,
    budget: usize,
}

const RATE_WINDOW: Duration = Duration::from_secs(60);

/// Either stamps `now` into the window and clears the caller to proceed,
/// or returns how long to wait for the oldest stamp to expire.
fn rate_delay(window: &mut RateWindow, now: Instant) -> Option<Duration> {
    while let Some(front) = window.stamps.front() {
        if now.duration_since(*front) >= RATE_WINDOW {
            window.stamps.pop_front();
        } else {
            break;
        }
    }
    if window.stamps.len() < window.budget {
        window.stamps.push_back(now);
        None
    } else {
        let front = *window.stamps.front().expect("budget is at least 1");
        Some(RATE_WINDOW.saturating_sub(now.duration_since(front)))
    }
}

/// The HTTP gateway. Shareable across threads; rate-limit accounting is
/// serialized internally and responses are immutable values.
pub struct Gateway {
    mode: GatewayMode,
    cassette: Mutex<Cassette>,
    base_url: String,
    api_key: Option<String>,
    client: Option<reqwest::blocking::Client>,
    slots: Slots,
    rate: Mutex<RateWindow>,
    backoff_base: Duration,
}

/// Default bound on concurrent in-flight requests.
pub const DEFAULT_CONCURRENCY: usize = 4;
/// Default requests-per-minute budget.
pub const DEFAULT_RPM: usize = 60;

impl Gateway {
    /// Replay-only gateway: serves the cassette, never dials out.
    pub fn replay(cassette_path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        Ok(Self::build(
            GatewayMode::Replay,
            Cassette::load(cassette_path)?,
            DEFAULT_BASE_URL.to_string(),
            None,
        ))
    }

    pub fn replay_from(cassette: Cassette) -> Self {
        Self::build(
            GatewayMode::Replay,
            cassette,
            DEFAULT_BASE_URL.to_string(),
            None,
        )
    }

    /// Live gateway; `api_key` is required before the first request.
    pub fn live(base_url: impl Into<String>, api_key: Option<String>) -> Self {
        Self::build(GatewayMode::Live, Cassette::in_memory(), base_url.into(), api_key)
    }

    /// Live gateway that also appends every exchange to the cassette.
    pub fn record(
        cassette_path: impl AsRef<Path>,
        base_url: impl Into<String>,
        api_key: Option<String>,
    ) -> Result<Self, GatewayError> {
        Ok(Self::build(
            GatewayMode::Record,
            Cassette::at_path(cassette_path.as_ref())?,
            base_url.into(),
            api_key,
        ))
    }

    fn build(
        mode: GatewayMode,
        cassette: Cassette,
        base_url: String,
        api_key: Option<String>,
    ) -> Self {
        let client = match mode {
            GatewayMode::Replay => None,
            _ => Some(reqwest::blocking::Client::new()),
        };
        Gateway {
            mode,
            cassette: Mutex::new(cassette),
            base_url,
            api_key,
            client,
            slots: Slots::new(DEFAULT_CONCURRENCY),
            rate: Mutex::new(RateWindow {
                stamps: std::collections::VecDeque::new(),
                budget: DEFAULT_RPM,
            }),
            backoff_base: Duration::from_secs(1),
        }
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.slots = Slots::new(n);
        self
    }

    pub fn with_rpm(mut self, rpm: usize) -> Self {
        self.rate.get_mut().unwrap().budget = rpm.max(1);
        self
    }

    /// Shrinks the retry backoff base; meant for tests against stub servers.
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    fn wait_for_rate_slot(&self) {
        loop {
            let sleep_for = rate_delay(&mut self.rate.lock().unwrap(), Instant::now());
            match sleep_for {
                None => return,
                Some(d) => std::thread::sleep(d.min(Duration::from_secs(1))),
            }
        }
    }

    fn post_once(
        &self,
        prompt: &PromptSpec,
        config: &GenerationConfig,
    ) -> Result<(String, String, Option<Usage>), GatewayError> {
        let client = self.client.as_ref().expect("live mode has a client");
        let api_key = self.api_key.as_deref().ok_or(GatewayError::MissingApiKey)?;
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let body = serde_json::json!({
            "model": config.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": config.temperature,
            "max_tokens": config.max_tokens,
        });
        let resp = client
            .post(&url)
            .bearer_auth(api_key)
            .timeout(config.timeout)
            .json(&body)
            .send()
            .map_err(|e| GatewayError::Transport {
                status: 0,
                body: e.to_string(),
            })?;

        let status = resp.status().as_u16();
        if status == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.parse::<f64>().ok());
            return Err(GatewayError::RateLimited { retry_after });
        }
        if status >= 400 {
            let body = resp.text().unwrap_or_default();
            return Err(GatewayError::Transport { status, body });
        }

        #[derive(Deserialize)]
        struct Choice {
            message: Message,
        }
        #[derive(Deserialize)]
        struct Message {
            content: Option<String>,
        }
        #[derive(Deserialize)]
        struct ChatResponse {
            choices: Vec<Choice>,
            model: Option<String>,
            usage: Option<Usage>,
        }

        let parsed: ChatResponse = resp.json().map_err(|e| GatewayError::Transport {
            status,
            body: format!("invalid response body: {e}"),
        })?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        let model = parsed.model.unwrap_or_else(|| config.model.clone());
        Ok((content, model, parsed.usage))
    }

    fn is_retryable(err: &GatewayError) -> bool {
        matches!(
            err,
            GatewayError::RateLimited { .. } | GatewayError::Transport { status: 0, .. }
        ) || matches!(err, GatewayError::Transport { status, .. } if *status >= 500)
    }

    fn post_with_retries(
        &self,
        prompt: &PromptSpec,
        config: &GenerationConfig,
    ) -> Result<(String, String, Option<Usage>), GatewayError> {
        let _slot = self.slots.acquire();
        let mut attempt = 0u32;
        loop {
            self.wait_for_rate_slot();
            match self.post_once(prompt, config) {
                Ok(out) => return Ok(out),
                Err(err) if Self::is_retryable(&err) && attempt < config.max_retries => {
                    let backoff = self.backoff_base * 2u32.saturating_pow(attempt);
                    let jitter = backoff.mul_f64(rand::random::<f64>() * 0.25);
                    let wait = match &err {
                        GatewayError::RateLimited {
                            retry_after: Some(s),
                        } => backoff.max(Duration::from_secs_f64(*s)),
                        _ => backoff,
                    };
                    log::warn!(
                        "request attempt {} failed ({err}); retrying in {:?}",
                        attempt + 1,
                        wait + jitter
                    );
                    std::thread::sleep(wait + jitter);
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}

impl CompletionSource for Gateway {
    fn complete(
        &self,
        prompt: &PromptSpec,
        config: &GenerationConfig,
    ) -> Result<RawResponse, GatewayError> {
        let fp = fingerprint(&prompt.text, config);
        match self.mode {
            GatewayMode::Replay => {
                let cassette = self.cassette.lock().unwrap();
                let entry = cassette
                    .get(&fp)
                    .ok_or_else(|| GatewayError::CassetteMiss(fp.clone()))?;
                Ok(RawResponse {
                    content: entry.content.clone(),
                    model: entry.model.clone(),
                    request_fingerprint: fp,
                    usage: None,
                })
            }
            GatewayMode::Live | GatewayMode::Record => {
                let (content, model, usage) = self.post_with_retries(prompt, config)?;
                if self.mode == GatewayMode::Record {
                    self.cassette
                        .lock()
                        .unwrap()
                        .record(&prompt.text, config, &content)?;
                }
                Ok(RawResponse {
                    content,
                    model,
                    request_fingerprint: fp,
                    usage,
                })
            }
        }
    }
}
