//! Multi-source corpus retrieval: per-source indexes, top-k evidence, and
//! query routing.
//!
//! Each source carries one of four index strategies — BM25 over an inverted
//! index, exact dense cosine, approximate dense via a navigable-small-world
//! graph, or hybrid BM25+dense fused with reciprocal ranks. A
//! [`SourceRegistry`] owns the sources, resolves source tags emitted by the
//! policy, and dispatches `top_k` queries to the right strategy.

mod dense;
mod embed;
mod fusion;
mod lexical;
mod persist;
mod registry;
mod tokenize;

pub use dense::{dense_search, DenseMode, GraphParams, HnswGraph, VectorStore};
pub use embed::HashEmbedder;
pub use fusion::fuse_rrf;
pub use lexical::{bm25_search, build_lexical, Bm25Params, InvertedIndex, ScoredDoc};
pub use persist::{
    load_registry, load_source, read_corpus_jsonl, save_registry, save_source, write_corpus_jsonl,
    FORMAT_VERSION,
};
pub use registry::{
    build_source, IndexStrategy, IndexedSource, RegistryBuilder, RouteDecision, SourceConfig,
    SourceRegistry, APPROX_MIN_DOCS, DEFAULT_TOP_K,
};
pub use tokenize::tokenize;

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("corpus has no records")]
    EmptyCorpus,
    #[error("duplicate doc_id {0:?}")]
    DuplicateDoc(String),
    #[error("record {0:?} is invalid: {1}")]
    InvalidRecord(String, String),
    #[error("query has no indexable terms")]
    EmptyQuery,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("query vector has dimension {got}, index expects {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("source {0:?} is not registered")]
    UnknownSource(String),
    #[error("source {0:?} has no vector index")]
    MissingVectorIndex(String),
    #[error("no graph index was built for this source")]
    MissingGraph,
    #[error("registry is invalid: {0}")]
    InvalidRegistry(String),
    #[error("embedder failed: {0}")]
    EmbedderUnavailable(#[from] crate::clients::ClientError),
    #[error("index format version {found} (expected {expected})")]
    FormatVersion { expected: u32, found: u32 },
    #[error("corpus line {line}: {message}")]
    CorpusParse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("persisted index is corrupt: {0}")]
    Corrupt(String),
}

/// One corpus document within a source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl CorpusRecord {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            metadata: BTreeMap::new(),
        }
    }

    fn validate(&self) -> Result<(), RetrievalError> {
        if self.doc_id.is_empty() {
            return Err(RetrievalError::InvalidRecord(
                self.doc_id.clone(),
                "empty doc_id".into(),
            ));
        }
        if self.text.is_empty() {
            return Err(RetrievalError::InvalidRecord(
                self.doc_id.clone(),
                "empty text".into(),
            ));
        }
        Ok(())
    }
}

/// One retrieved item. Within a result list ranks run 1..=k and scores are
/// non-increasing, ties broken by ascending doc_id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub source_id: String,
    pub doc_id: String,
    pub text: String,
    pub score: f64,
    pub rank: usize,
}
