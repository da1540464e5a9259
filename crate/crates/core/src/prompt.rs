//! Generator prompt assembly.
//!
//! A template file has three sections introduced by marker lines:
//!
//! ```text
//! {{preamble}}
//! ...imports and API docs; `{api_docs}` expands to the signature table...
//! {{demos}}
//! # Instruction: {instruction}
//! {code}
//! {{query}}
//! # Task: {query}
//! ```
//!
//! The assembled text is the preamble, then one demo block per retrieved
//! candidate from the least to the most relevant, then the query slot.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::plan::SignatureTable;
use crate::retrieval::{Query, RankedCandidate};

pub const DEFAULT_TEMPLATE: &str = include_str!("../data/templates/generator.txt");
pub const TARGET_TOKENS: usize = 8000;

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template is missing placeholder `{0}`")]
    MissingPlaceholder(String),
    #[error("placeholder `{0}` appears more than once")]
    DuplicatePlaceholder(String),
    #[error("candidates are not sorted by rank")]
    UnsortedCandidates,
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub preamble: String,
    pub demo_slot: String,
    pub query_slot: String,
    /// SHA-256 of the source text, hex.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub text: String,
    /// PNG bytes of the scene, sent as a separate image part.
    #[serde(skip)]
    pub image: Option<Vec<u8>>,
    /// Entry ids in prompt order; the last one is rank 1.
    pub demo_order: Vec<String>,
    pub token_estimate: usize,
}

/// Four characters per token.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn count(haystack: &str, needle: &str) -> usize {
    haystack.matches(needle).count()
}

fn require_once(slot: &str, name: &str) -> Result<(), TemplateError> {
    match count(slot, &format!("{{{name}}}")) {
        0 => Err(TemplateError::MissingPlaceholder(name.into())),
        1 => Ok(()),
        _ => Err(TemplateError::DuplicatePlaceholder(name.into())),
    }
}

/// Single-pass substitution, so values are never rescanned.
fn fill(slot: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(slot.len());
    let mut rest = slot;
    'scan: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (name, value) in values {
            let key = format!("{{{name}}}");
            if tail.starts_with(&key) {
                out.push_str(value);
                rest = &tail[key.len()..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut sections: [Option<String>; 3] = [None, None, None];
        let mut current: Option<usize> = None;
        for line in text.split_inclusive('\n') {
            let marker = match line.trim_end() {
                "{{preamble}}" => Some(0),
                "{{demos}}" => Some(1),
                "{{query}}" => Some(2),
                _ => None,
            };
            if let Some(i) = marker {
                if sections[i].is_some() {
                    return Err(TemplateError::DuplicatePlaceholder(
                        ["preamble", "demos", "query"][i].into(),
                    ));
                }
                sections[i] = Some(String::new());
                current = Some(i);
            } else if let Some(i) = current {
                sections[i].as_mut().expect("open section").push_str(line);
            }
        }
        let [preamble, demos, query] = sections;
        let preamble = preamble.ok_or_else(|| TemplateError::MissingPlaceholder("preamble".into()))?;
        let demo_slot = demos.ok_or_else(|| TemplateError::MissingPlaceholder("demos".into()))?;
        let query_slot = query.ok_or_else(|| TemplateError::MissingPlaceholder("query".into()))?;
        require_once(&demo_slot, "instruction")?;
        require_once(&demo_slot, "code")?;
        require_once(&query_slot, "query")?;
        let preamble = fill(
            &preamble,
            &[("api_docs", SignatureTable::builtin().render_docs().trim_end())],
        );
        Ok(Self {
            preamble,
            demo_slot,
            query_slot: query_slot.trim_end().to_string(),
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_TEMPLATE).expect("shipped template is valid")
    }

    pub fn render_demo(&self, instruction: &str, code: &str) -> String {
        let mut block = fill(
            &self.demo_slot,
            &[("instruction", instruction), ("code", code.trim_end())],
        );
        if !block.ends_with('\n') {
            block.push('\n');
        }
        block
    }

    pub fn render_query(&self, query: &str) -> String {
        fill(&self.query_slot, &[("query", query)])
    }
}

pub fn load_template(path: impl AsRef<Path>) -> Result<PromptTemplate, TemplateError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TemplateError::Io {
        path: path.display().to_string(),
        source,
    })?;
    PromptTemplate::parse(&text)
}

/// Preamble, demos from rank k down to rank 1, then the raw query.
pub fn assemble(tmpl: &PromptTemplate, q: &Query, ranked: &[RankedCandidate]) -> Result<PromptBundle, TemplateError> {
    if ranked.windows(2).any(|w| w[0].rank > w[1].rank) {
        return Err(TemplateError::UnsortedCandidates);
    }
    let mut text = tmpl.preamble.clone();
    let mut demo_order = Vec::with_capacity(ranked.len());
    for c in ranked.iter().rev() {
        text.push_str(&tmpl.render_demo(&c.entry.instruction, &c.entry.code));
        demo_order.push(c.entry.id.clone());
    }
    text.push_str(&tmpl.render_query(&q.raw));
    Ok(PromptBundle {
        token_estimate: estimate_tokens(&text),
        text,
        image: q.scene_image.clone(),
        demo_order,
    })
}
