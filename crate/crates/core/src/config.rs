//! Engine configuration file (`ramp.toml`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::Planner;
use crate::gateway::LlmMode;
use crate::retrieval::RetrievalConfig;
use crate::sim::TaskFamily;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Where generator answers come from in live and record modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    /// OpenAI-compatible chat-completions endpoint.
    Http,
    /// The deterministic offline imitation model.
    Imitation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GatewaySettings {
    pub mode: LlmMode,
    pub backend: BackendKind,
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    pub cassette: Option<PathBuf>,
}

impl Default for GatewaySettings {
    fn default() -> Self {
        Self {
            mode: LlmMode::Replay,
            backend: BackendKind::Http,
            endpoint: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            temperature: 0.0,
            timeout_secs: 120,
            cassette: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSettings {
    pub families: Vec<TaskFamily>,
    /// Half-open seed range `[start, end)`.
    pub seeds: (u64, u64),
    pub planner: Planner,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            families: TaskFamily::ALL.to_vec(),
            seeds: (0, 10),
            planner: Planner::Gateway,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// JSONL codebase; the built-in seed corpus when unset.
    pub corpus: Option<PathBuf>,
    /// Prompt template; the built-in one when unset.
    pub template: Option<PathBuf>,
    pub retrieval: RetrievalConfig,
    pub gateway: GatewaySettings,
    pub sim: SimSettings,
    pub output_dir: PathBuf,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            corpus: None,
            template: None,
            retrieval: RetrievalConfig::default(),
            gateway: GatewaySettings::default(),
            sim: SimSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl EngineConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Relative paths in the file are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.corpus.as_mut().map(rebase);
        cfg.template.as_mut().map(rebase);
        cfg.gateway.cassette.as_mut().map(rebase);
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.retrieval
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let g = &self.gateway;
        if !(g.temperature.is_finite() && g.temperature >= 0.0) {
            return Err(ConfigError::Invalid("temperature must be non-negative".into()));
        }
        if self.sim.seeds.0 >= self.sim.seeds.1 {
            return Err(ConfigError::Invalid("seed range is empty".into()));
        }
        if self.sim.families.is_empty() {
            return Err(ConfigError::Invalid("no task families".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let ok = "[gateway]\ncassette = \"c.jsonl\"\n[retrieval]\nK = 6\nlambda = 0.5\n";
        let cfg = EngineConfig::parse(ok).unwrap();
        assert_eq!((cfg.retrieval.recall_k, cfg.retrieval.lambda), (6, 0.5));
        assert!(EngineConfig::parse(&format!("{ok}bogus = 1\n")).is_err());
        assert!(EngineConfig::parse("[gateway]\ncassette = \"c\"\nfoo = 1\n").is_err());
    }

    #[test]
    fn k_above_recall_is_invalid() {
        let e = EngineConfig::parse("[gateway]\ncassette = \"c\"\n[retrieval]\nK = 2\nk = 3\n").unwrap_err();
        assert!(e.to_string().contains("k exceeds K"));
    }
}
