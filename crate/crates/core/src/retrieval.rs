//! Coarse retrieval, instruction rewriting, fine reranking and fusion.

use std::cmp::Ordering;
use std::fmt;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Codebase, PolicyEntry};
use crate::embedding::{cosine, dot, EmbeddingError, EmbeddingProvider};
use crate::gateway::{GatewayError, GeneratorGateway};
use crate::lexical::{score_bm25, score_tfidf, tokenize, Bm25Params, CorpusStats, LexicalError, TokenStream};

/// Soft template for the rewriter; `{query}` is replaced by the raw instruction.
pub const REWRITER_TEMPLATE: &str = include_str!("../data/templates/rewriter.txt");

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("query text is empty")]
    EmptyQuery,
    #[error("codebase is empty")]
    EmptyCorpus,
    #[error("codebase has {have} entries but K = {need}")]
    InsufficientCorpus { have: usize, need: usize },
    #[error("invalid retrieval config: {0}")]
    Config(String),
    #[error("coarse: {0}")]
    Lexical(#[from] LexicalError),
    #[error("{stage}: {source}")]
    Embedding {
        stage: &'static str,
        #[source]
        source: EmbeddingError,
    },
    #[error("{stage}: {source}")]
    Gateway {
        stage: &'static str,
        #[source]
        source: GatewayError,
    },
}

impl RetrievalError {
    pub fn stage(&self) -> &'static str {
        match self {
            RetrievalError::Embedding { stage, .. } | RetrievalError::Gateway { stage, .. } => stage,
            RetrievalError::Config(_) => "config",
            _ => "coarse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Tfidf,
    Bm25,
    Embedding,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Tfidf, Metric::Bm25, Metric::Embedding];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Tfidf => "tfidf",
            Metric::Bm25 => "bm25",
            Metric::Embedding => "embedding",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How the embedding metric compares query and instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingScore {
    Cosine,
    Dot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub metric: Metric,
    #[serde(rename = "K")]
    pub recall_k: usize,
    pub k: usize,
    pub lambda: f64,
    pub coarse_enabled: bool,
    pub rewrite_enabled: bool,
    pub rerank_enabled: bool,
    pub reorder_enabled: bool,
    pub ramp_enabled: bool,
    /// Seed for the random selection used when RAMP is disabled.
    pub seed: u64,
    /// Temperature applied to the cosine before the sigmoid.
    pub tau: f64,
    /// Rerank on instruction plus code instead of instruction only.
    pub rerank_with_code: bool,
    pub embedding_score: EmbeddingScore,
    pub bm25: Bm25Params,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Tfidf,
            recall_k: 5,
            k: 2,
            lambda: 0.25,
            coarse_enabled: true,
            rewrite_enabled: true,
            rerank_enabled: true,
            reorder_enabled: true,
            ramp_enabled: true,
            seed: 0,
            tau: 5.0,
            rerank_with_code: false,
            embedding_score: EmbeddingScore::Cosine,
            bm25: Bm25Params::default(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), RetrievalError> {
        let bad = |m: &str| Err(RetrievalError::Config(m.to_string()));
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        if self.recall_k == 0 {
            return bad("K must be at least 1");
        }
        if self.k > self.recall_k {
            return bad("k exceeds K");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be positive");
        }
        self.bm25.validate().map_err(|e| RetrievalError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Query {
    pub raw: String,
    pub rewritten: Option<String>,
    /// PNG bytes of the scene.
    pub scene_image: Option<Vec<u8>>,
}

impl Query {
    pub fn new(raw: impl Into<String>) -> Result<Self, RetrievalError> {
        let raw = raw.into();
        if raw.trim().is_empty() {
            return Err(RetrievalError::EmptyQuery);
        }
        Ok(Self {
            raw,
            rewritten: None,
            scene_image: None,
        })
    }

    pub fn with_image(mut self, png: Vec<u8>) -> Self {
        self.scene_image = Some(png);
        self
    }

    /// Rewritten text when present, the raw text otherwise.
    pub fn text(&self) -> &str {
        self.rewritten.as_deref().unwrap_or(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub entry: PolicyEntry,
    pub score_cr: f64,
    pub score_fr: Option<f64>,
    pub fused: Option<f64>,
    pub rank: usize,
}

impl RankedCandidate {
    fn new(entry: PolicyEntry, score_cr: f64) -> Self {
        Self {
            entry,
            score_cr,
            score_fr: None,
            fused: None,
            rank: 0,
        }
    }
}

/// Tokenized instructions and corpus statistics for the lexical metrics.
pub struct LexicalIndex {
    docs: Vec<TokenStream>,
    stats: CorpusStats,
}

impl LexicalIndex {
    pub fn build(cb: &Codebase) -> Self {
        let docs: Vec<TokenStream> = cb.iter().map(|e| tokenize(&e.instruction)).collect();
        let stats = CorpusStats::build(cb.iter().map(|e| e.id.as_str()).zip(docs.iter()));
        Self { docs, stats }
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }
}

/// Descending by score, ascending by id on ties.
fn by_score_then_id(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Metric scores of `q.raw` against every instruction, in codebase order.
pub fn coarse_scores(
    q: &Query,
    cb: &Codebase,
    cfg: &RetrievalConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<f64>, RetrievalError> {
    if cb.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    let qt = tokenize(&q.raw);
    match cfg.metric {
        Metric::Tfidf => {
            let idx = LexicalIndex::build(cb);
            idx.docs.iter().map(|d| Ok(score_tfidf(&qt, d, &idx.stats)?)).collect()
        }
        Metric::Bm25 => {
            let idx = LexicalIndex::build(cb);
            cb.iter()
                .map(|e| Ok(score_bm25(&qt, &e.id, &idx.stats, cfg.bm25)?))
                .collect()
        }
        Metric::Embedding => {
            let emb = |e| RetrievalError::Embedding {
                stage: "coarse",
                source: e,
            };
            let qv = provider.embed(&q.raw).map_err(emb)?;
            cb.iter()
                .map(|e| {
                    let dv = provider.embed(&e.instruction).map_err(emb)?;
                    match cfg.embedding_score {
                        EmbeddingScore::Cosine => cosine(&qv, &dv),
                        EmbeddingScore::Dot => dot(&qv, &dv),
                    }
                    .map_err(emb)
                })
                .collect()
        }
    }
}

/// The K entries with the highest coarse score, ties by id.
pub fn coarse_retrieve(
    q: &Query,
    cb: &Codebase,
    cfg: &RetrievalConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    if cb.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    if cb.len() < cfg.recall_k {
        return Err(RetrievalError::InsufficientCorpus {
            have: cb.len(),
            need: cfg.recall_k,
        });
    }
    let scores = coarse_scores(q, cb, cfg, provider)?;
    let mut cands: Vec<RankedCandidate> = cb
        .iter()
        .zip(scores)
        .map(|(e, s)| RankedCandidate::new(e.clone(), s))
        .collect();
    cands.sort_by(|a, b| by_score_then_id((a.score_cr, &a.entry.id), (b.score_cr, &b.entry.id)));
    cands.truncate(cfg.recall_k);
    for (i, c) in cands.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    Ok(cands)
}

pub fn rewriter_prompt(raw: &str) -> String {
    REWRITER_TEMPLATE.replace("{query}", raw)
}

/// Fills `rewritten` from the gateway. An empty answer falls back to the raw text.
pub fn rewrite_instruction(q: &Query, gateway: &GeneratorGateway) -> Result<Query, RetrievalError> {
    let answer = gateway
        .complete_text(&rewriter_prompt(&q.raw))
        .map_err(|source| RetrievalError::Gateway {
            stage: "rewriter",
            source,
        })?;
    let answer = answer.trim();
    let mut out = q.clone();
    if answer.is_empty() {
        warn!("rewriter returned nothing for `{}`; using the raw instruction", q.raw);
        out.rewritten = Some(q.raw.clone());
    } else {
        out.rewritten = Some(answer.to_string());
    }
    Ok(out)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `score_fr = sigmoid(tau * cosine(query, instruction))` for each candidate.
pub fn fine_rerank(
    q: &Query,
    cands: &[RankedCandidate],
    provider: &dyn EmbeddingProvider,
    cfg: &RetrievalConfig,
) -> Result<Vec<RankedCandidate>, RetrievalError> {
    let emb = |e| RetrievalError::Embedding {
        stage: "reranker",
        source: e,
    };
    let qv = provider.embed(q.text()).map_err(emb)?;
    cands
        .iter()
        .map(|c| {
            let text = if cfg.rerank_with_code {
                format!("{}\n{}", c.entry.instruction, c.entry.code)
            } else {
                c.entry.instruction.clone()
            };
            let cv = provider.embed(&text).map_err(emb)?;
            let mut out = c.clone();
            out.score_fr = Some(sigmoid(cfg.tau * cosine(&qv, &cv).map_err(emb)?));
            Ok(out)
        })
        .collect()
}

/// Min-max scaling to `[0, 1]`; all-equal input maps to 0.5.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// `fused = lambda * norm(score_cr) + (1 - lambda) * score_fr`; top k, ranked.
pub fn fuse_and_rank(cands: &[RankedCandidate], cfg: &RetrievalConfig) -> Vec<RankedCandidate> {
    let norm = min_max(&cands.iter().map(|c| c.score_cr).collect::<Vec<_>>());
    let mut out: Vec<RankedCandidate> = cands
        .iter()
        .zip(norm)
        .map(|(c, n)| {
            let mut c = c.clone();
            c.fused = Some(cfg.lambda * n + (1.0 - cfg.lambda) * c.score_fr.unwrap_or(0.0));
            c
        })
        .collect();
    out.sort_by(|a, b| {
        by_score_then_id(
            (a.fused.unwrap_or(0.0), &a.entry.id),
            (b.fused.unwrap_or(0.0), &b.entry.id),
        )
    });
    out.truncate(cfg.k);
    for (i, c) in out.iter_mut().enumerate() {
        c.rank = i + 1;
    }
    out
}

/// k entries drawn uniformly without replacement; the stream depends on
/// the configured seed and the query text.
pub fn random_selection(q: &Query, cb: &Codebase, cfg: &RetrievalConfig) -> Vec<RankedCandidate> {
    let mut h = Sha256::new();
    h.update(cfg.seed.to_le_bytes());
    h.update(q.raw.as_bytes());
    let digest = h.finalize();
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().expect("8 bytes")));
    let picks = rand::seq::index::sample(&mut rng, cb.len(), cfg.k.min(cb.len()));
    picks
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            let mut c = RankedCandidate::new(cb.entries()[j].clone(), 0.0);
            c.rank = i + 1;
            c
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub query: Query,
    pub ranked: Vec<RankedCandidate>,
}

/// Coarse retrieval, rewrite, rerank and fusion, honoring the ablation
/// switches. Without a gateway the rewrite stage passes the raw text through.
pub fn run_pipeline(
    q: &Query,
    cb: &Codebase,
    cfg: &RetrievalConfig,
    gateway: Option<&GeneratorGateway>,
    provider: &dyn EmbeddingProvider,
) -> Result<PipelineOutput, RetrievalError> {
    cfg.validate()?;
    if cb.is_empty() {
        return Err(RetrievalError::EmptyCorpus);
    }
    if !cfg.ramp_enabled {
        return Ok(PipelineOutput {
            query: q.clone(),
            ranked: random_selection(q, cb, cfg),
        });
    }
    let cands = if cfg.coarse_enabled {
        coarse_retrieve(q, cb, cfg, provider)?
    } else {
        if cb.len() < cfg.k {
            return Err(RetrievalError::InsufficientCorpus {
                have: cb.len(),
                need: cfg.k,
            });
        }
        cb.iter().map(|e| RankedCandidate::new(e.clone(), 0.0)).collect()
    };
    let query = match (cfg.rewrite_enabled, gateway) {
        (true, Some(g)) => rewrite_instruction(q, g)?,
        _ => Query {
            rewritten: Some(q.raw.clone()),
            ..q.clone()
        },
    };
    let ranked = if cfg.rerank_enabled {
        let scored = fine_rerank(&query, &cands, provider, cfg)?;
        if cfg.reorder_enabled {
            fuse_and_rank(&scored, cfg)
        } else {
            first_k(scored, cfg.k)
        }
    } else {
        first_k(cands, cfg.k)
    };
    Ok(PipelineOutput { query, ranked })
}

fn first_k(mut cands: Vec<RankedCandidate>, k: usize) -> Vec<RankedCandidate> {
    cands.truncate(k);
    for (i, c) in cands.iter_mut().enumerate() {
        c.rank = i + 1;
        c.fused = None;
    }
    cands
}
