//! Inverted index with Okapi BM25 scoring.

use super::tokenize::tokenize;
use super::{CorpusRecord, RetrievalError};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

/// Postings, document lengths, and collection statistics for one source.
///
/// Documents are addressed by their index in the build-time record order;
/// callers keep that order sorted by doc_id so index ties coincide with
/// doc_id ties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: Vec<u32>,
    total_tokens: u64,
}

impl InvertedIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_frequency(&self, term: &str) -> usize {
        self.postings.get(term).map_or(0, Vec::len)
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.doc_lengths.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.doc_lengths.len() as f64
        }
    }

    pub fn doc_length(&self, doc: u32) -> u32 {
        self.doc_lengths[doc as usize]
    }
}

/// Builds the inverted index over `records` in slice order.
pub fn build_lexical(records: &[CorpusRecord]) -> Result<InvertedIndex, RetrievalError> {
    if records.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let mut seen = HashMap::with_capacity(records.len());
    let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
    let mut doc_lengths = Vec::with_capacity(records.len());
    let mut total_tokens = 0u64;

    for (idx, record) in records.iter().enumerate() {
        record.validate()?;
        if seen.insert(record.doc_id.clone(), idx).is_some() {
            return Err(RetrievalError::DuplicateDoc(record.doc_id.clone()));
        }
        let tokens = tokenize(&record.text);
        doc_lengths.push(tokens.len() as u32);
        total_tokens += tokens.len() as u64;

        let mut tf: BTreeMap<String, u32> = BTreeMap::new();
        for token in tokens {
            *tf.entry(token).or_insert(0) += 1;
        }
        for (term, count) in tf {
            postings.entry(term).or_default().push(Posting {
                doc: idx as u32,
                tf: count,
            });
        }
    }

    Ok(InvertedIndex {
        postings,
        doc_lengths,
        total_tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredDoc {
    pub doc: u32,
    pub score: f64,
}

/// Sorts by descending score, then ascending doc index.
pub(crate) fn sort_scored(docs: &mut Vec<ScoredDoc>) {
    docs.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.doc.cmp(&b.doc))
    });
}

/// Okapi BM25 over the index. Uses the non-negative idf variant
/// `ln(1 + (N - df + 0.5)/(df + 0.5))`, so every matching document scores
/// positive; returns at most `k` scored docs.
pub fn bm25_search(
    index: &InvertedIndex,
    params: Bm25Params,
    query: &str,
    k: usize,
) -> Result<Vec<ScoredDoc>, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let mut terms = tokenize(query);
    if terms.is_empty() {
        return Err(RetrievalError::EmptyQuery);
    }
    terms.sort();
    terms.dedup();

    let n = index.doc_count() as f64;
    let avgdl = index.avg_doc_length();
    let mut scores: HashMap<u32, f64> = HashMap::new();

    for term in &terms {
        let Some(postings) = index.postings.get(term) else {
            continue;
        };
        let df = postings.len() as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        for p in postings {
            let tf = p.tf as f64;
            let dl = index.doc_lengths[p.doc as usize] as f64;
            let denom = tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl);
            let contribution = idf * tf * (params.k1 + 1.0) / denom;
            *scores.entry(p.doc).or_insert(0.0) += contribution;
        }
    }

    let mut ranked: Vec<ScoredDoc> = scores
        .into_iter()
        .filter(|(_, score)| *score > 0.0)
        .map(|(doc, score)| ScoredDoc { doc, score })
        .collect();
    sort_scored(&mut ranked);
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(texts: &[&str]) -> Vec<CorpusRecord> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| CorpusRecord::new(format!("d{i}"), *t))
            .collect()
    }

    #[test]
    fn counts_match_tiny_corpus() {
        let index = build_lexical(&records(&["a", "b", "a"])).unwrap();
        assert_eq!(index.doc_frequency("a"), 2);
        assert_eq!(index.doc_frequency("b"), 1);
        assert_eq!(index.avg_doc_length(), 1.0);
        assert_eq!(index.doc_count(), 3);
    }

    #[test]
    fn empty_corpus_is_an_error() {
        assert!(matches!(
            build_lexical(&[]),
            Err(RetrievalError::EmptyCorpus)
        ));
    }

    #[test]
    fn duplicate_doc_id_is_an_error() {
        let mut recs = records(&["x", "y"]);
        recs[1].doc_id = "d0".to_string();
        assert!(matches!(
            build_lexical(&recs),
            Err(RetrievalError::DuplicateDoc(id)) if id == "d0"
        ));
    }

    #[test]
    fn unique_term_ranks_its_document_first() {
        let index = build_lexical(&records(&[
            "theft of property",
            "fraud of property",
            "robbery in public",
        ]))
        .unwrap();
        let hits = bm25_search(&index, Bm25Params::default(), "fraud", 3).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].doc, 1);
        assert!(hits[0].score > 0.0);
    }

    #[test]
    fn out_of_vocabulary_query_returns_nothing() {
        let index = build_lexical(&records(&["a b", "c d"])).unwrap();
        let hits = bm25_search(&index, Bm25Params::default(), "zzz", 5).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn punctuation_only_query_is_empty() {
        let index = build_lexical(&records(&["a"])).unwrap();
        assert!(matches!(
            bm25_search(&index, Bm25Params::default(), "?!", 1),
            Err(RetrievalError::EmptyQuery)
        ));
    }

    #[test]
    fn ties_break_by_doc_index() {
        let index = build_lexical(&records(&["same text", "same text", "other words"])).unwrap();
        let hits = bm25_search(&index, Bm25Params::default(), "same", 3).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].doc, 0);
        assert_eq!(hits[1].doc, 1);
        assert_eq!(hits[0].score, hits[1].score);
    }
}
