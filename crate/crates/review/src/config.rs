use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::queue::{QueueOptions, DEFAULT_SNAPSHOT_EVERY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub claim_ttl_secs: u64,
    /// Accepted bearer tokens. Empty means every request is refused.
    pub tokens: Vec<String>,
    pub snapshot_every: usize,
    pub fsync: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("radlabel-data"),
            claim_ttl_secs: 1800,
            tokens: Vec::new(),
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
            fsync: true,
        }
    }
}

impl ServiceConfig {
    /// Defaults, then the TOML file if given, then `RADLABEL_*` environment variables.
    pub fn load(path: Option<&Path>) -> Result<Self, String> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
                toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, String> {
            v.trim().parse().map_err(|_| format!("{key}: cannot parse {v:?}"))
        }
        if let Some(v) = var("RADLABEL_BIND") {
            self.bind = v;
        }
        if let Some(v) = var("RADLABEL_PORT") {
            self.port = num("RADLABEL_PORT", &v)?;
        }
        if let Some(v) = var("RADLABEL_DATA_DIR") {
            self.data_dir = PathBuf::from(v);
        }
        if let Some(v) = var("RADLABEL_CLAIM_TTL_SECS") {
            self.claim_ttl_secs = num("RADLABEL_CLAIM_TTL_SECS", &v)?;
        }
        if let Some(v) = var("RADLABEL_SNAPSHOT_EVERY") {
            self.snapshot_every = num("RADLABEL_SNAPSHOT_EVERY", &v)?;
        }
        if let Some(v) = var("RADLABEL_TOKENS") {
            self.tokens = v.split(',').map(str::trim).filter(|t| !t.is_empty()).map(String::from).collect();
        }
        Ok(())
    }

    pub fn queue_options(&self) -> QueueOptions {
        QueueOptions {
            claim_ttl_ms: self.claim_ttl_secs * 1000,
            snapshot_every: self.snapshot_every,
            fsync: self.fsync,
        }
    }
}
