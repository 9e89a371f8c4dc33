//! Generator, judge, and embedder contracts.
//!
//! Remote implementations speak JSON over HTTP (see [`http`]); deterministic
//! mocks satisfy the identical contracts so the whole engine runs with no
//! network. Endpoint URLs come from configuration or the environment
//! variables `MSR2_GENERATOR_URL`, `MSR2_JUDGE_URL`, and `MSR2_EMBEDDER_URL`.

pub mod http;
pub mod mock;

pub use http::{RemoteEmbedder, RemoteGenerator, RemoteJudge, RetryPolicy};
pub use mock::{CachingJudge, DigestRuleGenerator, FailingJudge, ScriptedGenerator, ScriptedJudge, StubEmbedder};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum ClientError {
    #[error("generator unavailable after {attempts} attempt(s): {message}")]
    GeneratorUnavailable { attempts: usize, message: String },
    #[error("judge unavailable after {attempts} attempt(s): {message}")]
    JudgeUnavailable { attempts: usize, message: String },
    #[error("embedder unavailable after {attempts} attempt(s): {message}")]
    EmbedderUnavailable { attempts: usize, message: String },
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedder returned dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Static limits and abilities a generator reports about itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorCaps {
    pub max_context: usize,
    pub max_new_tokens: usize,
    pub supports_logprobs: bool,
    pub supports_concurrent_sessions: bool,
}

impl Default for GeneratorCaps {
    fn default() -> Self {
        Self {
            max_context: 16_384,
            max_new_tokens: 8_192,
            supports_logprobs: false,
            supports_concurrent_sessions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub context: String,
    pub stop_tags: Vec<String>,
    pub max_new_tokens: usize,
}

/// One turn of generated text. `tokens` is the generator's own tokenization
/// of `text`; when `logprobs` is present it aligns with `tokens`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationOutput {
    pub text: String,
    pub tokens: Vec<String>,
    pub logprobs: Option<Vec<f64>>,
}

pub trait Generator {
    fn caps(&self) -> GeneratorCaps;
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutput, ClientError>;
}

pub trait Judge {
    /// Single-turn exchange: rubric prompt in, raw reply text out.
    fn judge(&self, prompt: &str) -> Result<String, ClientError>;
}

pub trait Embedder {
    fn dim(&self) -> usize;
    /// One vector per input text, order preserving.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError>;
}

/// Truncates `text` at the end of the earliest stop tag, if any.
pub fn truncate_at_stop(text: &str, stop_tags: &[String]) -> String {
    let mut cut = None;
    for tag in stop_tags {
        if let Some(pos) = text.find(tag.as_str()) {
            let end = pos + tag.len();
            cut = Some(cut.map_or(end, |c: usize| c.min(end)));
        }
    }
    match cut {
        Some(end) => text[..end].to_string(),
        None => text.to_string(),
    }
}

/// Checks the logprob alignment contract on a generator's output.
pub fn validate_output(caps: &GeneratorCaps, out: &GenerationOutput) -> Result<(), ClientError> {
    if let Some(lp) = &out.logprobs {
        if lp.len() != out.tokens.len() {
            return Err(ClientError::Protocol(format!(
                "{} logprobs for {} tokens",
                lp.len(),
                out.tokens.len()
            )));
        }
    } else if caps.supports_logprobs {
        return Err(ClientError::Protocol(
            "generator reports logprob support but returned none".to_string(),
        ));
    }
    Ok(())
}
