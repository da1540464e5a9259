//! Keyword similarity: tokenization, TF-IDF and BM25.
//!
//! Term frequency is taken over the *query* (count of the term in the query
//! divided by query length), and the BM25 length normalization uses the query
//! length against the average codebase document length. Document frequency
//! is the number of codebase documents containing the term. Logs are natural.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LexicalError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("unknown document `{0}`")]
    UnknownDoc(String),
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
}

/// Lowercased terms of a string, in order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenStream {
    tokens: Vec<String>,
}

impl TokenStream {
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            tokens: tokens
                .into_iter()
                .map(Into::into)
                .filter(|t: &String| !t.is_empty())
                .collect(),
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn count(&self, term: &str) -> usize {
        self.tokens.iter().filter(|t| *t == term).count()
    }

    /// Distinct terms in sorted order.
    pub fn unique(&self) -> BTreeSet<&str> {
        self.tokens.iter().map(String::as_str).collect()
    }
}

/// Lowercase, turn every non-alphanumeric character into a separator,
/// split on whitespace.
pub fn tokenize(text: &str) -> TokenStream {
    let normalized: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    TokenStream::from_tokens(normalized.split_whitespace())
}

/// Fraction of the query's tokens equal to `term`.
pub fn tf(term: &str, q: &TokenStream) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    q.count(term) as f64 / q.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, LexicalError> {
        let p = Self { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LexicalError> {
        if !(self.k1 > 0.0 && self.k1.is_finite()) {
            return Err(LexicalError::InvalidParams(format!("k1 must be > 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(LexicalError::InvalidParams(format!(
                "b must be in [0,1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

/// Document statistics over a tokenized codebase.
#[derive(Debug, Clone, Default)]
pub struct CorpusStats {
    doc_count: usize,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
    per_doc_len: HashMap<String, usize>,
    doc_terms: HashMap<String, BTreeSet<String>>,
}

impl CorpusStats {
    /// Builds statistics from `(doc-id, tokens)` pairs.
    pub fn build<'a, I>(docs: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a TokenStream)>,
    {
        let mut stats = CorpusStats::default();
        let mut total_len = 0usize;
        for (id, tokens) in docs {
            stats.doc_count += 1;
            total_len += tokens.len();
            stats.per_doc_len.insert(id.to_string(), tokens.len());
            let terms: BTreeSet<String> = tokens.tokens().iter().cloned().collect();
            for term in &terms {
                *stats.doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
            stats.doc_terms.insert(id.to_string(), terms);
        }
        if stats.doc_count > 0 {
            stats.avg_len = total_len as f64 / stats.doc_count as f64;
        }
        stats
    }

    pub fn doc_count(&self) -> usize {
        self.doc_count
    }

    /// Distinct terms across all documents.
    pub fn vocabulary_len(&self) -> usize {
        self.doc_freq.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn doc_len(&self, id: &str) -> Option<usize> {
        self.per_doc_len.get(id).copied()
    }

    pub fn contains(&self, id: &str, term: &str) -> Option<bool> {
        self.doc_terms.get(id).map(|t| t.contains(term))
    }
}

/// `ln(|C| / (df + 1))`; negative when the term is in every document.
pub fn idf_tfidf(term: &str, stats: &CorpusStats) -> Result<f64, LexicalError> {
    idf_tfidf_raw(stats.doc_count(), stats.doc_freq(term))
}

pub fn idf_tfidf_raw(doc_count: usize, df: usize) -> Result<f64, LexicalError> {
    if doc_count == 0 {
        return Err(LexicalError::EmptyCorpus);
    }
    Ok((doc_count as f64 / (df as f64 + 1.0)).ln())
}

/// `ln((|C| - df + 0.5) / (df + 0.5) + 1)`, always positive for df in 0..=|C|.
pub fn idf_bm25(term: &str, stats: &CorpusStats) -> Result<f64, LexicalError> {
    idf_bm25_raw(stats.doc_count(), stats.doc_freq(term))
}

pub fn idf_bm25_raw(doc_count: usize, df: usize) -> Result<f64, LexicalError> {
    if doc_count == 0 {
        return Err(LexicalError::EmptyCorpus);
    }
    let n = doc_count as f64;
    let df = df as f64;
    Ok(((n - df + 0.5) / (df + 0.5) + 1.0).ln())
}

/// Sum over distinct terms shared by query and document of `idf * tf`.
pub fn score_tfidf(q: &TokenStream, doc: &TokenStream, stats: &CorpusStats) -> Result<f64, LexicalError> {
    if stats.doc_count() == 0 {
        return Err(LexicalError::EmptyCorpus);
    }
    let doc_terms = doc.unique();
    let mut score = 0.0;
    for term in q.unique() {
        if doc_terms.contains(term) {
            score += idf_tfidf(term, stats)? * tf(term, q);
        }
    }
    Ok(score)
}

/// Query-side BM25 term weight.
pub fn bm25_weight(term: &str, q: &TokenStream, stats: &CorpusStats, p: Bm25Params) -> f64 {
    let tf = tf(term, q);
    let len_norm = 1.0 - p.b + p.b * q.len() as f64 / stats.avg_len();
    tf * (p.k1 + 1.0) / (tf + p.k1 * len_norm)
}

pub fn score_bm25(q: &TokenStream, doc_id: &str, stats: &CorpusStats, p: Bm25Params) -> Result<f64, LexicalError> {
    if stats.doc_count() == 0 {
        return Err(LexicalError::EmptyCorpus);
    }
    if stats.doc_len(doc_id).is_none() {
        return Err(LexicalError::UnknownDoc(doc_id.to_string()));
    }
    let mut score = 0.0;
    for term in q.unique() {
        if stats.contains(doc_id, term) == Some(true) {
            score += idf_bm25(term, stats)? * bm25_weight(term, q, stats, p);
        }
    }
    Ok(score)
}
