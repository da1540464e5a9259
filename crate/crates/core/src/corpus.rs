//! The codebase of policy programs searched by the coarse retriever.
//!
//! On disk a codebase is UTF-8 JSON lines, one [`PolicyEntry`] per line:
//!
//! ```text
//! {"id":"rotate-01","instruction":"rotate the red block by 90 degrees","code":"rotate(obj=\"red block\", degrees=90)","source":"cap","tags":["rotate"]}
//! ```
//!
//! Unknown fields are rejected. Entries are kept sorted by id so every
//! downstream tie-break is deterministic.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Seed corpus shipped with the crate.
pub const SEED_CORPUS: &str = include_str!("../data/corpus/seed.jsonl");

/// Seed corpus plus irrelevant programs, used for the ablation suite.
pub const DISTRACTOR_CORPUS: &str = include_str!("../data/corpus/distractors.jsonl");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record on line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate entry id `{0}`")]
    DuplicateId(String),
    #[error("io failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// One program in the retrieval codebase.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyEntry {
    pub id: String,
    pub instruction: String,
    pub code: String,
    pub source: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl PolicyEntry {
    pub fn new(
        id: impl Into<String>,
        instruction: impl Into<String>,
        code: impl Into<String>,
        source: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            instruction: instruction.into(),
            code: code.into(),
            source: source.into(),
            tags: Vec::new(),
        }
    }

    pub fn with_tags<I, S>(mut self, tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tags = tags.into_iter().map(Into::into).collect();
        self
    }

    fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.instruction.trim().is_empty() {
            return Err("empty instruction".into());
        }
        if self.code.trim().is_empty() {
            return Err("empty code".into());
        }
        Ok(())
    }
}

/// Immutable, id-sorted collection of [`PolicyEntry`] values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Codebase {
    entries: Vec<PolicyEntry>,
}

impl Codebase {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a codebase from arbitrary entries, validating and sorting them.
    pub fn from_entries(entries: Vec<PolicyEntry>) -> Result<Self, CorpusError> {
        let mut by_id = BTreeMap::new();
        for (idx, entry) in entries.into_iter().enumerate() {
            entry
                .check()
                .map_err(|reason| CorpusError::MalformedRecord { line: idx + 1, reason })?;
            if by_id.contains_key(&entry.id) {
                return Err(CorpusError::DuplicateId(entry.id));
            }
            by_id.insert(entry.id.clone(), entry);
        }
        Ok(Self {
            entries: by_id.into_values().collect(),
        })
    }

    /// Parses line-delimited records. Blank lines are skipped but still
    /// counted for error line numbers.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let mut by_id: BTreeMap<String, PolicyEntry> = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let entry: PolicyEntry = serde_json::from_str(line).map_err(|e| CorpusError::MalformedRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
            entry
                .check()
                .map_err(|reason| CorpusError::MalformedRecord { line: line_no, reason })?;
            if by_id.contains_key(&entry.id) {
                return Err(CorpusError::DuplicateId(entry.id));
            }
            by_id.insert(entry.id.clone(), entry);
        }
        Ok(Self {
            entries: by_id.into_values().collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn seed() -> Self {
        Self::parse(SEED_CORPUS).expect("shipped seed corpus is valid")
    }

    pub fn with_distractors() -> Self {
        Self::parse(DISTRACTOR_CORPUS).expect("shipped distractor corpus is valid")
    }

    /// Serializes to the on-disk format. Output is byte-stable.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for entry in &self.entries {
            out.push_str(&serde_json::to_string(entry).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io_err)?;
        Ok(())
    }

    /// Returns a new codebase with `entry` inserted at its sorted position.
    pub fn add_entry(&self, entry: PolicyEntry) -> Result<Self, CorpusError> {
        entry
            .check()
            .map_err(|reason| CorpusError::MalformedRecord { line: 0, reason })?;
        match self.entries.binary_search_by(|e| e.id.cmp(&entry.id)) {
            Ok(_) => Err(CorpusError::DuplicateId(entry.id)),
            Err(pos) => {
                let mut entries = self.entries.clone();
                entries.insert(pos, entry);
                Ok(Self { entries })
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PolicyEntry] {
        &self.entries
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PolicyEntry> {
        self.entries.iter()
    }

    pub fn get(&self, id: &str) -> Option<&PolicyEntry> {
        self.entries
            .binary_search_by(|e| e.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Distinct source tags, sorted.
    pub fn sources(&self) -> Vec<&str> {
        let mut s: Vec<&str> = self.entries.iter().map(|e| e.source.as_str()).collect();
        s.sort_unstable();
        s.dedup();
        s
    }
}

impl<'a> IntoIterator for &'a Codebase {
    type Item = &'a PolicyEntry;
    type IntoIter = std::slice::Iter<'a, PolicyEntry>;

    fn into_iter(self) -> Self::IntoIter {
        self.entries.iter()
    }
}
