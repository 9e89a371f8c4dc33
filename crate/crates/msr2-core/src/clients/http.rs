//! Remote clients speaking JSON over HTTP.
//!
//! Request/response schemas (all POST, `Content-Type: application/json`):
//!
//! - generator: `{"context", "stop_tags", "max_new_tokens"}` ->
//!   `{"text", "tokens"?, "logprobs"?}`
//! - judge: `{"prompt"}` -> `{"text"}`
//! - embedder: `{"texts"}` -> `{"vectors"}`
//!
//! An optional bearer token (`MSR2_API_TOKEN`) is passed through unchanged.
//! Calls retry with exponential backoff; judge replies are cached by prompt
//! digest, which also makes retried calls idempotent.

use super::{
    truncate_at_stop, ClientError, GenerationOutput, GenerationRequest, Generator, GeneratorCaps,
    Judge,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::sync::RwLock;
use std::time::Duration;

pub const GENERATOR_URL_VAR: &str = "MSR2_GENERATOR_URL";
pub const JUDGE_URL_VAR: &str = "MSR2_JUDGE_URL";
pub const EMBEDDER_URL_VAR: &str = "MSR2_EMBEDDER_URL";
pub const API_TOKEN_VAR: &str = "MSR2_API_TOKEN";

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: usize,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
        }
    }
}

fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    client: &reqwest::blocking::Client,
    url: &str,
    token: Option<&str>,
    retry: RetryPolicy,
    body: &Req,
) -> Result<Resp, (usize, String)> {
    let mut backoff = retry.initial_backoff;
    let mut last_error = String::new();
    for attempt in 1..=retry.attempts.max(1) {
        let mut request = client.post(url).json(body);
        if let Some(token) = token {
            request = request.bearer_auth(token);
        }
        match request.send() {
            Ok(response) => match response.error_for_status() {
                Ok(ok) => match ok.json::<Resp>() {
                    Ok(parsed) => return Ok(parsed),
                    // A malformed body will not improve on retry.
                    Err(e) => return Err((attempt, format!("bad response body: {e}"))),
                },
                Err(e) => last_error = e.to_string(),
            },
            Err(e) => last_error = e.to_string(),
        }
        if attempt < retry.attempts {
            std::thread::sleep(backoff);
            backoff = (backoff * 2).min(retry.max_backoff);
        }
    }
    Err((retry.attempts, last_error))
}

fn api_token() -> Option<String> {
    std::env::var(API_TOKEN_VAR).ok()
}

#[derive(Serialize)]
struct GenerateRequestBody<'a> {
    context: &'a str,
    stop_tags: &'a [String],
    max_new_tokens: usize,
}

#[derive(Deserialize)]
struct GenerateResponseBody {
    text: String,
    #[serde(default)]
    tokens: Option<Vec<String>>,
    #[serde(default)]
    logprobs: Option<Vec<f64>>,
}

pub struct RemoteGenerator {
    url: String,
    token: Option<String>,
    caps: GeneratorCaps,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl RemoteGenerator {
    pub fn new(url: impl Into<String>, caps: GeneratorCaps) -> Self {
        Self {
            url: url.into(),
            token: api_token(),
            caps,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn from_env() -> Result<Self, ClientError> {
        let url = std::env::var(GENERATOR_URL_VAR).map_err(|_| {
            ClientError::InvalidInput(format!("{GENERATOR_URL_VAR} is not set"))
        })?;
        Ok(Self::new(url, GeneratorCaps::default()))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl Generator for RemoteGenerator {
    fn caps(&self) -> GeneratorCaps {
        self.caps
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutput, ClientError> {
        let body = GenerateRequestBody {
            context: &request.context,
            stop_tags: &request.stop_tags,
            max_new_tokens: request.max_new_tokens,
        };
        let response: GenerateResponseBody = post_json(
            &self.client,
            &self.url,
            self.token.as_deref(),
            self.retry,
            &body,
        )
        .map_err(|(attempts, message)| ClientError::GeneratorUnavailable { attempts, message })?;

        let text = truncate_at_stop(&response.text, &request.stop_tags);
        let tokens = match response.tokens {
            // Upstream token arrays are only trustworthy when the text was
            // not truncated locally.
            Some(tokens) if response.text == text => tokens,
            _ => text.split_whitespace().map(str::to_string).collect(),
        };
        let logprobs = response.logprobs.filter(|lp| lp.len() == tokens.len());
        let out = GenerationOutput {
            text,
            tokens,
            logprobs,
        };
        super::validate_output(&self.caps, &out)?;
        Ok(out)
    }
}

#[derive(Serialize)]
struct JudgeRequestBody<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct JudgeResponseBody {
    text: String,
}

pub struct RemoteJudge {
    url: String,
    token: Option<String>,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
    cache: RwLock<HashMap<[u8; 32], String>>,
}

impl RemoteJudge {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            token: api_token(),
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::new(),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn from_env() -> Result<Self, ClientError> {
        let url = std::env::var(JUDGE_URL_VAR)
            .map_err(|_| ClientError::InvalidInput(format!("{JUDGE_URL_VAR} is not set")))?;
        Ok(Self::new(url))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl Judge for RemoteJudge {
    fn judge(&self, prompt: &str) -> Result<String, ClientError> {
        let key: [u8; 32] = Sha256::digest(prompt.as_bytes()).into();
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let response: JudgeResponseBody = post_json(
            &self.client,
            &self.url,
            self.token.as_deref(),
            self.retry,
            &JudgeRequestBody { prompt },
        )
        .map_err(|(attempts, message)| ClientError::JudgeUnavailable { attempts, message })?;
        self.cache
            .write()
            .unwrap()
            .insert(key, response.text.clone());
        Ok(response.text)
    }
}

#[derive(Serialize)]
struct EmbedRequestBody<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponseBody {
    vectors: Vec<Vec<f64>>,
}

pub struct RemoteEmbedder {
    url: String,
    token: Option<String>,
    dim: usize,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(url: impl Into<String>, dim: usize) -> Self {
        Self {
            url: url.into(),
            token: api_token(),
            dim,
            retry: RetryPolicy::default(),
            client: reqwest::blocking::Client::new(),
        }
    }

    pub fn from_env(dim: usize) -> Result<Self, ClientError> {
        let url = std::env::var(EMBEDDER_URL_VAR)
            .map_err(|_| ClientError::InvalidInput(format!("{EMBEDDER_URL_VAR} is not set")))?;
        Ok(Self::new(url, dim))
    }
}

impl super::Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let response: EmbedResponseBody = post_json(
            &self.client,
            &self.url,
            self.token.as_deref(),
            self.retry,
            &EmbedRequestBody { texts },
        )
        .map_err(|(attempts, message)| ClientError::EmbedderUnavailable { attempts, message })?;
        if response.vectors.len() != texts.len() {
            return Err(ClientError::Protocol(format!(
                "{} vectors for {} texts",
                response.vectors.len(),
                texts.len()
            )));
        }
        for v in &response.vectors {
            if v.len() != self.dim {
                return Err(ClientError::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        Ok(response.vectors)
    }
}
