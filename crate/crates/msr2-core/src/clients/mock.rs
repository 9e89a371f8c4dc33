//! Deterministic mock clients. Every remote client has a mock twin here so
//! the full test suite and the toy trainer run offline and replay identically.

use super::{
    truncate_at_stop, ClientError, GenerationOutput, GenerationRequest, Generator, GeneratorCaps,
    Judge,
};
use sha2::{Digest, Sha256};
use std::cell::Cell;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

/// Replays a fixed list of turn texts. With `cycling`, the script wraps
/// around instead of running dry.
#[derive(Debug)]
pub struct ScriptedGenerator {
    turns: Vec<String>,
    cursor: Cell<usize>,
    cycling: bool,
    caps: GeneratorCaps,
}

impl ScriptedGenerator {
    pub fn new(turns: Vec<String>) -> Self {
        Self {
            turns,
            cursor: Cell::new(0),
            cycling: false,
            caps: GeneratorCaps::default(),
        }
    }

    pub fn cycling(turns: Vec<String>) -> Self {
        Self {
            cycling: true,
            ..Self::new(turns)
        }
    }

    pub fn reset(&self) {
        self.cursor.set(0);
    }
}

impl Generator for ScriptedGenerator {
    fn caps(&self) -> GeneratorCaps {
        self.caps
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutput, ClientError> {
        let idx = self.cursor.get();
        if idx >= self.turns.len() && !self.cycling {
            return Err(ClientError::GeneratorUnavailable {
                attempts: 1,
                message: format!("script exhausted after {} turn(s)", self.turns.len()),
            });
        }
        let turn = &self.turns[idx % self.turns.len().max(1)];
        self.cursor.set(idx + 1);

        let mut text = truncate_at_stop(turn, &request.stop_tags);
        let mut tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
        if tokens.len() > request.max_new_tokens {
            tokens.truncate(request.max_new_tokens);
            text = tokens.join(" ");
        }
        Ok(GenerationOutput {
            text,
            tokens,
            logprobs: None,
        })
    }
}

/// Deterministic rule generator: maps a digest of the context to turn text.
pub struct DigestRuleGenerator<F: Fn(u64) -> String> {
    rule: F,
    caps: GeneratorCaps,
}

impl<F: Fn(u64) -> String> DigestRuleGenerator<F> {
    pub fn new(rule: F) -> Self {
        Self {
            rule,
            caps: GeneratorCaps::default(),
        }
    }
}

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl<F: Fn(u64) -> String> Generator for DigestRuleGenerator<F> {
    fn caps(&self) -> GeneratorCaps {
        self.caps
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationOutput, ClientError> {
        let text = truncate_at_stop(
            &(self.rule)(fnv64(request.context.as_bytes())),
            &request.stop_tags,
        );
        let tokens = text.split_whitespace().map(str::to_string).collect();
        Ok(GenerationOutput {
            text,
            tokens,
            logprobs: None,
        })
    }
}

/// Always replies with the same canned text.
#[derive(Debug, Clone)]
pub struct ScriptedJudge {
    reply: String,
}

impl ScriptedJudge {
    pub fn new(reply: impl Into<String>) -> Self {
        Self {
            reply: reply.into(),
        }
    }
}

impl Judge for ScriptedJudge {
    fn judge(&self, _prompt: &str) -> Result<String, ClientError> {
        Ok(self.reply.clone())
    }
}

/// Fails the first `failures` calls, then replies normally. For exercising
/// retry and error paths.
#[derive(Debug)]
pub struct FailingJudge {
    failures: Cell<usize>,
    reply: String,
}

impl FailingJudge {
    pub fn new(failures: usize, reply: impl Into<String>) -> Self {
        Self {
            failures: Cell::new(failures),
            reply: reply.into(),
        }
    }
}

impl Judge for FailingJudge {
    fn judge(&self, _prompt: &str) -> Result<String, ClientError> {
        let left = self.failures.get();
        if left > 0 {
            self.failures.set(left - 1);
            return Err(ClientError::JudgeUnavailable {
                attempts: 1,
                message: "injected fault".to_string(),
            });
        }
        Ok(self.reply.clone())
    }
}

/// Caches replies by prompt digest so identical prompts hit upstream once.
pub struct CachingJudge<J> {
    inner: J,
    cache: RwLock<HashMap<[u8; 32], String>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<J: Judge> CachingJudge<J> {
    pub fn new(inner: J) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

fn prompt_digest(prompt: &str) -> [u8; 32] {
    Sha256::digest(prompt.as_bytes()).into()
}

impl<J: Judge> Judge for CachingJudge<J> {
    fn judge(&self, prompt: &str) -> Result<String, ClientError> {
        let key = prompt_digest(prompt);
        if let Some(reply) = self.cache.read().unwrap().get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(reply.clone());
        }
        let reply = self.inner.judge(prompt)?;
        self.misses.fetch_add(1, Ordering::Relaxed);
        self.cache.write().unwrap().insert(key, reply.clone());
        Ok(reply)
    }
}

/// Embedder stub returning unit basis vectors keyed by call order.
#[derive(Debug)]
pub struct StubEmbedder {
    dim: usize,
    next: Cell<usize>,
}

impl StubEmbedder {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            next: Cell::new(0),
        }
    }
}

impl super::Embedder for StubEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        let mut out = Vec::with_capacity(texts.len());
        for _ in texts {
            let mut v = vec![0.0; self.dim];
            v[self.next.get() % self.dim] = 1.0;
            self.next.set(self.next.get() + 1);
            out.push(v);
        }
        Ok(out)
    }
}
