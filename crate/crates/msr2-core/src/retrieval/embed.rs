//! Default deterministic embedder: signed feature hashing over tokens,
//! L2-normalized. A remote embedder can be swapped in behind the same
//! contract; this one keeps the whole suite runnable offline.

use super::tokenize::tokenize;
use crate::clients::{ClientError, Embedder};

fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
}

impl HashEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 8, "embedding dimension must be at least 8");
        Self { dim }
    }

    /// Embeds one text. Identical text always yields the identical unit
    /// vector.
    pub fn embed_one(&self, text: &str) -> Result<Vec<f64>, ClientError> {
        if text.trim().is_empty() {
            return Err(ClientError::InvalidInput(
                "cannot embed empty text".to_string(),
            ));
        }
        let mut v = vec![0.0f64; self.dim];
        for token in tokenize(text) {
            let h = fnv64(token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            // Tokens cancelled or none tokenized; fall back to a single
            // bucket keyed by the raw text so the vector stays unit-norm.
            let bucket = (fnv64(text.as_bytes()) % self.dim as u64) as usize;
            v[bucket] = 1.0;
            return Ok(v);
        }
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }
}

impl Embedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ClientError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}
