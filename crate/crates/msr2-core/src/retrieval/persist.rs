//! Versioned on-disk layout for indexes and registries.
//!
//! A source directory holds `manifest.json`, `records.jsonl`, and the index
//! payloads its strategy requires (`postings.json`, `vectors.json`). A
//! registry directory holds `registry.json` plus one subdirectory per source.
//! Everything is written from canonically ordered structures, so indexing the
//! same corpus twice produces byte-identical directories.

use super::dense::VectorStore;
use super::lexical::InvertedIndex;
use super::registry::{IndexedSource, SourceConfig, SourceRegistry};
use super::{CorpusRecord, RetrievalError};
use crate::clients::Embedder;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct SourceManifest {
    format_version: u32,
    #[serde(flatten)]
    config: SourceConfig,
    record_count: usize,
    has_lexical: bool,
    has_vectors: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryManifest {
    format_version: u32,
    default_source: String,
    tag_aliases: BTreeMap<String, String>,
    sources: Vec<String>,
    embed_dim: usize,
}

/// Reads a corpus file: one JSON record per line with `doc_id`, `text`, and
/// an optional `metadata` string map. Errors carry 1-based line numbers.
pub fn read_corpus_jsonl(path: &Path) -> Result<Vec<CorpusRecord>, RetrievalError> {
    let file = fs::File::open(path)?;
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CorpusRecord =
            serde_json::from_str(&line).map_err(|e| RetrievalError::CorpusParse {
                line: idx + 1,
                message: e.to_string(),
            })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_corpus_jsonl(path: &Path, records: &[CorpusRecord]) -> Result<(), RetrievalError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut w, record).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RetrievalError> {
    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, value).map_err(|e| RetrievalError::Corrupt(e.to_string()))?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, RetrievalError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| RetrievalError::Corrupt(format!("{}: {e}", path.display())))
}

/// Persists one source into `dir` (created if missing).
pub fn save_source(source: &IndexedSource, dir: &Path) -> Result<(), RetrievalError> {
    fs::create_dir_all(dir)?;
    let manifest = SourceManifest {
        format_version: FORMAT_VERSION,
        config: source.config().clone(),
        record_count: source.record_count(),
        has_lexical: source.lexical_index().is_some(),
        has_vectors: source.vector_store().is_some(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    write_corpus_jsonl(&dir.join("records.jsonl"), source.records())?;
    if let Some(index) = source.lexical_index() {
        write_json(&dir.join("postings.json"), index)?;
    }
    if let Some(store) = source.vector_store() {
        write_json(&dir.join("vectors.json"), store)?;
    }
    Ok(())
}

/// Loads a source directory, rejecting mismatched format versions.
pub fn load_source(dir: &Path) -> Result<IndexedSource, RetrievalError> {
    let manifest: SourceManifest = read_json(&dir.join("manifest.json"))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(RetrievalError::FormatVersion {
            expected: FORMAT_VERSION,
            found: manifest.format_version,
        });
    }
    let records = read_corpus_jsonl(&dir.join("records.jsonl"))?;
    if records.len() != manifest.record_count {
        return Err(RetrievalError::Corrupt(format!(
            "manifest lists {} records, found {}",
            manifest.record_count,
            records.len()
        )));
    }
    let lexical: Option<InvertedIndex> = if manifest.has_lexical {
        Some(read_json(&dir.join("postings.json"))?)
    } else {
        None
    };
    let vectors: Option<VectorStore> = if manifest.has_vectors {
        Some(read_json(&dir.join("vectors.json"))?)
    } else {
        None
    };
    Ok(IndexedSource::from_parts(
        manifest.config,
        records,
        lexical,
        vectors,
    ))
}

/// Persists the registry manifest and every registered source under `dir`.
pub fn save_registry(registry: &SourceRegistry, dir: &Path) -> Result<(), RetrievalError> {
    fs::create_dir_all(dir)?;
    let source_ids = registry.source_ids();
    let manifest = RegistryManifest {
        format_version: FORMAT_VERSION,
        default_source: registry.default_source().to_string(),
        tag_aliases: registry.tag_aliases().clone(),
        sources: source_ids.clone(),
        embed_dim: registry.embedder().dim(),
    };
    write_json(&dir.join("registry.json"), &manifest)?;
    for id in source_ids {
        let source = registry
            .source(&id)
            .ok_or_else(|| RetrievalError::UnknownSource(id.clone()))?;
        save_source(&source, &dir.join(&id))?;
    }
    Ok(())
}

/// Loads a registry directory with the given query-time embedder.
pub fn load_registry(
    dir: &Path,
    embedder: Arc<dyn Embedder + Send + Sync>,
) -> Result<SourceRegistry, RetrievalError> {
    let manifest: RegistryManifest = read_json(&dir.join("registry.json"))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(RetrievalError::FormatVersion {
            expected: FORMAT_VERSION,
            found: manifest.format_version,
        });
    }
    if embedder.dim() != manifest.embed_dim {
        return Err(RetrievalError::DimMismatch {
            expected: manifest.embed_dim,
            got: embedder.dim(),
        });
    }
    let mut builder = SourceRegistry::builder(manifest.default_source, embedder);
    for (tag, source_id) in manifest.tag_aliases {
        builder = builder.alias(tag, source_id);
    }
    for id in manifest.sources {
        builder = builder.source(load_source(&dir.join(&id))?);
    }
    builder.build()
}
