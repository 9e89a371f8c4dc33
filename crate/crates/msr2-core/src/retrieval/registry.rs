//! Indexed sources and the routing registry.

use super::dense::{dense_search, DenseMode, GraphParams, VectorStore};
use super::fusion::fuse_rrf;
use super::lexical::{bm25_search, build_lexical, Bm25Params, InvertedIndex, ScoredDoc};
use super::{CorpusRecord, Evidence, RetrievalError};
use crate::clients::Embedder;
use crate::tag_protocol::SearchAction;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

/// Default evidence count per search.
pub const DEFAULT_TOP_K: usize = 3;

/// Below this corpus size an approximate source answers queries with the
/// exact scan; the graph is still built so it persists with the index.
pub const APPROX_MIN_DOCS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexStrategy {
    Lexical,
    DenseExact,
    DenseApprox,
    Hybrid,
}

impl IndexStrategy {
    pub fn needs_lexical(self) -> bool {
        matches!(self, Self::Lexical | Self::Hybrid)
    }

    pub fn needs_vectors(self) -> bool {
        matches!(self, Self::DenseExact | Self::DenseApprox | Self::Hybrid)
    }

    pub fn needs_graph(self) -> bool {
        matches!(self, Self::DenseApprox | Self::Hybrid)
    }
}

impl std::str::FromStr for IndexStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "lexical" => Ok(Self::Lexical),
            "dense-exact" => Ok(Self::DenseExact),
            "dense-approx" => Ok(Self::DenseApprox),
            "hybrid" => Ok(Self::Hybrid),
            other => Err(format!(
                "unknown strategy {other:?} (expected lexical, dense-exact, dense-approx, hybrid)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    pub source_id: String,
    pub strategy: IndexStrategy,
    pub embed_dim: usize,
    pub bm25: Bm25Params,
    pub graph: GraphParams,
    /// Reciprocal-rank constant for hybrid fusion.
    pub k_rrf: usize,
}

impl SourceConfig {
    pub fn new(source_id: impl Into<String>, strategy: IndexStrategy, embed_dim: usize) -> Self {
        Self {
            source_id: source_id.into(),
            strategy,
            embed_dim,
            bm25: Bm25Params::default(),
            graph: GraphParams::default(),
            k_rrf: 60,
        }
    }
}

/// One immutable retrieval source: records plus the indexes its strategy
/// requires. Records are canonicalized to ascending doc_id at build time so
/// score ties across every index type resolve to ascending doc_id.
#[derive(Debug)]
pub struct IndexedSource {
    config: SourceConfig,
    records: Vec<CorpusRecord>,
    lexical: Option<InvertedIndex>,
    vectors: Option<VectorStore>,
}

/// Builds a source from `records`, embedding texts when the strategy needs
/// vectors.
pub fn build_source(
    config: SourceConfig,
    mut records: Vec<CorpusRecord>,
    embedder: &dyn Embedder,
) -> Result<IndexedSource, RetrievalError> {
    if records.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    records.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));

    let lexical = if config.strategy.needs_lexical() {
        Some(build_lexical(&records)?)
    } else {
        // Duplicate/validity checks normally happen inside the lexical build.
        let mut prev: Option<&str> = None;
        for r in &records {
            r.validate()?;
            if prev == Some(r.doc_id.as_str()) {
                return Err(RetrievalError::DuplicateDoc(r.doc_id.clone()));
            }
            prev = Some(r.doc_id.as_str());
        }
        None
    };

    let vectors = if config.strategy.needs_vectors() {
        if embedder.dim() != config.embed_dim {
            return Err(RetrievalError::DimMismatch {
                expected: config.embed_dim,
                got: embedder.dim(),
            });
        }
        let texts: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
        let embedded = embedder.embed(&texts)?;
        let graph = config.strategy.needs_graph().then_some(config.graph);
        Some(VectorStore::build(embedded, config.embed_dim, graph)?)
    } else {
        None
    };

    Ok(IndexedSource {
        config,
        records,
        lexical,
        vectors,
    })
}

impl IndexedSource {
    pub(crate) fn from_parts(
        config: SourceConfig,
        records: Vec<CorpusRecord>,
        lexical: Option<InvertedIndex>,
        vectors: Option<VectorStore>,
    ) -> Self {
        Self {
            config,
            records,
            lexical,
            vectors,
        }
    }

    pub fn source_id(&self) -> &str {
        &self.config.source_id
    }

    pub fn strategy(&self) -> IndexStrategy {
        self.config.strategy
    }

    pub fn config(&self) -> &SourceConfig {
        &self.config
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    /// Records in canonical (ascending doc_id) order.
    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn lexical_index(&self) -> Option<&InvertedIndex> {
        self.lexical.as_ref()
    }

    pub(crate) fn vector_store(&self) -> Option<&VectorStore> {
        self.vectors.as_ref()
    }

    fn lexical_hits(&self, query: &str, k: usize) -> Result<Vec<ScoredDoc>, RetrievalError> {
        let index = self
            .lexical
            .as_ref()
            .ok_or_else(|| RetrievalError::InvalidRegistry("lexical index missing".into()))?;
        bm25_search(index, self.config.bm25, query, k)
    }

    fn dense_hits(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<ScoredDoc>, RetrievalError> {
        let store = self
            .vectors
            .as_ref()
            .ok_or_else(|| RetrievalError::MissingVectorIndex(self.config.source_id.clone()))?;
        let qv = embedder.embed(&[query.to_string()])?;
        let mode = if self.config.strategy == IndexStrategy::DenseApprox
            && self.records.len() >= APPROX_MIN_DOCS
        {
            DenseMode::Approx
        } else {
            DenseMode::Exact
        };
        dense_search(store, &qv[0], k, mode)
    }

    fn to_evidence(&self, hits: &[ScoredDoc]) -> Vec<Evidence> {
        hits.iter()
            .enumerate()
            .map(|(i, hit)| {
                let record = &self.records[hit.doc as usize];
                Evidence {
                    source_id: self.config.source_id.clone(),
                    doc_id: record.doc_id.clone(),
                    text: record.text.clone(),
                    score: hit.score,
                    rank: i + 1,
                }
            })
            .collect()
    }

    /// Strategy-dispatched top-k evidence for `query`.
    pub fn search(
        &self,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<Evidence>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let hits = match self.config.strategy {
            IndexStrategy::Lexical => self.lexical_hits(query, k)?,
            IndexStrategy::DenseExact | IndexStrategy::DenseApprox => {
                self.dense_hits(query, k, embedder)?
            }
            IndexStrategy::Hybrid => {
                let lexical = self.lexical_hits(query, k)?;
                let dense = self.dense_hits(query, k, embedder)?;
                let rankings = [
                    lexical.iter().map(|h| h.doc).collect::<Vec<_>>(),
                    dense.iter().map(|h| h.doc).collect::<Vec<_>>(),
                ];
                fuse_rrf(&rankings, self.config.k_rrf)
                    .into_iter()
                    .take(k)
                    .map(|(doc, score)| ScoredDoc { doc, score })
                    .collect()
            }
        };
        Ok(self.to_evidence(&hits))
    }
}

/// Where a search action was routed, and whether its tag was unknown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteDecision {
    pub source_id: String,
    /// Set when the action carried a tag that maps to no source; such queries
    /// fall back to the default source and the trajectory records a warning.
    pub unknown_tag: bool,
}

/// Registered sources plus tag aliases and a default fallback source.
///
/// Built sources are immutable; concurrent readers query freely while
/// `replace_source` swaps in a rebuilt source atomically.
pub struct SourceRegistry {
    sources: RwLock<BTreeMap<String, Arc<IndexedSource>>>,
    default_source: String,
    tag_aliases: BTreeMap<String, String>,
    embedder: Arc<dyn Embedder + Send + Sync>,
}

pub struct RegistryBuilder {
    default_source: String,
    tag_aliases: BTreeMap<String, String>,
    embedder: Arc<dyn Embedder + Send + Sync>,
    sources: BTreeMap<String, Arc<IndexedSource>>,
}

impl RegistryBuilder {
    pub fn alias(mut self, tag: impl Into<String>, source_id: impl Into<String>) -> Self {
        self.tag_aliases
            .insert(tag.into().to_ascii_lowercase(), source_id.into());
        self
    }

    pub fn source(mut self, source: IndexedSource) -> Self {
        self.sources
            .insert(source.source_id().to_string(), Arc::new(source));
        self
    }

    pub fn build(self) -> Result<SourceRegistry, RetrievalError> {
        if !self.sources.contains_key(&self.default_source) {
            return Err(RetrievalError::InvalidRegistry(format!(
                "default source {:?} is not registered",
                self.default_source
            )));
        }
        for (tag, source_id) in &self.tag_aliases {
            if !self.sources.contains_key(source_id) {
                return Err(RetrievalError::InvalidRegistry(format!(
                    "alias {tag:?} points to unregistered source {source_id:?}"
                )));
            }
        }
        Ok(SourceRegistry {
            sources: RwLock::new(self.sources),
            default_source: self.default_source,
            tag_aliases: self.tag_aliases,
            embedder: self.embedder,
        })
    }
}

impl SourceRegistry {
    pub fn builder(
        default_source: impl Into<String>,
        embedder: Arc<dyn Embedder + Send + Sync>,
    ) -> RegistryBuilder {
        RegistryBuilder {
            default_source: default_source.into(),
            tag_aliases: BTreeMap::new(),
            embedder,
            sources: BTreeMap::new(),
        }
    }

    pub fn default_source(&self) -> &str {
        &self.default_source
    }

    pub fn tag_aliases(&self) -> &BTreeMap<String, String> {
        &self.tag_aliases
    }

    pub fn embedder(&self) -> &(dyn Embedder + Send + Sync) {
        self.embedder.as_ref()
    }

    pub fn source_ids(&self) -> Vec<String> {
        self.sources.read().unwrap().keys().cloned().collect()
    }

    pub fn source(&self, source_id: &str) -> Option<Arc<IndexedSource>> {
        self.sources.read().unwrap().get(source_id).cloned()
    }

    /// Atomically replaces (or adds) a source under its own id.
    pub fn replace_source(&self, source: IndexedSource) {
        self.sources
            .write()
            .unwrap()
            .insert(source.source_id().to_string(), Arc::new(source));
    }

    /// Resolves a search action to a source id. Total: a tagged query routes
    /// via the alias map (or an exact source id); an absent tag falls back to
    /// the default source; an unknown tag falls back with a warning.
    pub fn route(&self, action: &SearchAction) -> RouteDecision {
        match &action.source_tag {
            None => RouteDecision {
                source_id: self.default_source.clone(),
                unknown_tag: false,
            },
            Some(tag) => {
                if let Some(source_id) = self.tag_aliases.get(tag) {
                    return RouteDecision {
                        source_id: source_id.clone(),
                        unknown_tag: false,
                    };
                }
                if self.sources.read().unwrap().contains_key(tag) {
                    return RouteDecision {
                        source_id: tag.clone(),
                        unknown_tag: false,
                    };
                }
                RouteDecision {
                    source_id: self.default_source.clone(),
                    unknown_tag: true,
                }
            }
        }
    }

    /// Top-k evidence from a registered source, ranks assigned 1..=k.
    pub fn top_k(
        &self,
        source_id: &str,
        query: &str,
        k: usize,
    ) -> Result<Vec<Evidence>, RetrievalError> {
        let source = self
            .source(source_id)
            .ok_or_else(|| RetrievalError::UnknownSource(source_id.to_string()))?;
        source.search(query, k, self.embedder.as_ref())
    }

    /// [`Self::top_k`] with the default k of 3.
    pub fn top_k_default(
        &self,
        source_id: &str,
        query: &str,
    ) -> Result<Vec<Evidence>, RetrievalError> {
        self.top_k(source_id, query, DEFAULT_TOP_K)
    }
}

impl std::fmt::Debug for SourceRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SourceRegistry")
            .field("default_source", &self.default_source)
            .field("tag_aliases", &self.tag_aliases)
            .field("sources", &self.source_ids())
            .finish()
    }
}
