use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use super::{ChatRequest, GatewayError};

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exchange {
    pub request_hash: String,
    pub request: serde_json::Value,
    pub response_text: String,
    pub timestamp: String,
}

/// Line-delimited [`Exchange`] records keyed by request hash.
pub struct Cassette {
    path: Option<PathBuf>,
    map: RwLock<HashMap<String, String>>,
    append: Mutex<()>,
}

impl Cassette {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            map: RwLock::new(HashMap::new()),
            append: Mutex::new(()),
        }
    }

    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let cassette = Self::in_memory();
        {
            let mut map = cassette.map.write();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let ex: Exchange =
                    serde_json::from_str(line).map_err(|e| GatewayError::Cassette(format!("line {}: {e}", i + 1)))?;
                match map.get(&ex.request_hash) {
                    Some(prev) if *prev != ex.response_text => {
                        return Err(GatewayError::Cassette(format!(
                            "line {}: hash {} recorded with two different responses",
                            i + 1,
                            ex.request_hash
                        )))
                    }
                    _ => {
                        map.insert(ex.request_hash, ex.response_text);
                    }
                }
            }
        }
        Ok(cassette)
    }

    /// Loads an existing cassette file.
    pub fn load(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        let text = fs::read_to_string(&path).map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        c.path = Some(path);
        Ok(c)
    }

    /// Loads the file if it exists, otherwise starts an empty cassette there.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let path = path.into();
        if path.exists() {
            return Self::load(path);
        }
        let mut c = Self::in_memory();
        c.path = Some(path);
        Ok(c)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.map.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, hash: &str) -> Option<String> {
        self.map.read().get(hash).cloned()
    }

    /// Stores the exchange and appends it to the backing file, if any.
    pub fn record(&self, req: &ChatRequest, response: &str) -> Result<(), GatewayError> {
        let hash = req.hash();
        let _guard = self.append.lock();
        if self.map.read().contains_key(&hash) {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let ex = Exchange {
                request_hash: hash.clone(),
                request: serde_json::to_value(req).expect("request serializes"),
                response_text: response.to_string(),
                timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            };
            let mut line = serde_json::to_string(&ex).expect("exchange serializes");
            line.push('\n');
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
            f.write_all(line.as_bytes())
                .map_err(|e| GatewayError::Cassette(format!("{}: {e}", path.display())))?;
        }
        self.map.write().insert(hash, response.to_string());
        Ok(())
    }
}
