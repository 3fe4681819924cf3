//! Per-command bookkeeping: hashed inputs and outputs, derived seeds, and the manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use radlabel::io::{parse_jsonl, to_jsonl};
use radlabel::seed::derive_seed;
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Category, CliError, CliResult};
use crate::settings::RunConfig;

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to rerun a command; contains no timestamps or absolute
/// output paths, so identical runs produce identical manifests.
#[derive(Debug, Serialize)]
pub struct Manifest<'a, P: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: &'a RunConfig,
    pub parameters: &'a P,
    pub seeds: &'a BTreeMap<String, u64>,
    pub inputs: &'a [FileRecord],
    pub outputs: &'a [FileRecord],
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Stage<'a> {
    pub name: &'static str,
    pub cfg: &'a RunConfig,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    seeds: BTreeMap<String, u64>,
}

impl<'a> Stage<'a> {
    pub fn new(name: &'static str, cfg: &'a RunConfig) -> Self {
        Self {
            name,
            cfg,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seeds: BTreeMap::new(),
        }
    }

    pub fn err(&self, category: Category, msg: impl std::fmt::Display) -> CliError {
        CliError::new(self.name, category, msg)
    }

    pub fn module(&self, msg: impl std::fmt::Display) -> CliError {
        self.err(Category::Module, msg)
    }

    pub fn invalid(&self, msg: impl std::fmt::Display) -> CliError {
        self.err(Category::Input, msg)
    }

    pub fn config(&self, msg: impl std::fmt::Display) -> CliError {
        self.err(Category::Config, msg)
    }

    /// Seed for `label`, derived from the root seed and recorded.
    pub fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.cfg.seed, &format!("{}/{label}", self.name));
        self.seeds.insert(label.to_string(), s);
        s
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| {
            let cat = if e.kind() == std::io::ErrorKind::NotFound {
                Category::MissingInput
            } else {
                Category::Input
            };
            self.err(cat, format!("{}: {e}", path.display()))
        })?;
        let record = FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len(),
        };
        if !self.inputs.iter().any(|r| r.path == record.path) {
            self.inputs.push(record);
        }
        Ok(bytes)
    }

    pub fn read_text(&mut self, path: &Path) -> CliResult<String> {
        let bytes = self.read(path)?;
        String::from_utf8(bytes).map_err(|e| self.invalid(format!("{}: {e}", path.display())))
    }

    pub fn read_jsonl<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<Vec<T>> {
        let text = self.read_text(path)?;
        parse_jsonl(&text, &path.display().to_string()).map_err(|e| self.invalid(e))
    }

    pub fn read_jsonl_all<T: DeserializeOwned>(&mut self, paths: &[PathBuf]) -> CliResult<Vec<T>> {
        let mut out = Vec::new();
        for p in paths {
            out.extend(self.read_jsonl(p)?);
        }
        Ok(out)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| self.invalid(format!("{}: {e}", path.display())))
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.cfg.out.join(name)
    }

    /// Write `bytes` to `name` under the output directory.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.out_path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| self.err(Category::Output, format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&path, bytes).map_err(|e| self.err(Category::Output, format!("{}: {e}", path.display())))?;
        self.outputs.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| self.err(Category::Output, e))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_jsonl<T: Serialize>(&mut self, name: &str, items: &[T]) -> CliResult<()> {
        self.write(name, to_jsonl(items).as_bytes())
    }

    /// Write `manifest-<command>.json` and return its path.
    pub fn finish<P: Serialize>(mut self, parameters: &P) -> CliResult<PathBuf> {
        let manifest = Manifest {
            tool: "radlabel",
            version: env!("CARGO_PKG_VERSION"),
            command: self.name,
            config: self.cfg,
            parameters,
            seeds: &self.seeds,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| self.err(Category::Output, e))?;
        text.push('\n');
        let name = format!("manifest-{}.json", self.name);
        let path = self.out_path(&name);
        std::fs::create_dir_all(&self.cfg.out)
            .map_err(|e| self.err(Category::Output, format!("{}: {e}", self.cfg.out.display())))?;
        std::fs::write(&path, text).map_err(|e| self.err(Category::Output, format!("{}: {e}", path.display())))?;
        self.outputs.clear();
        Ok(path)
    }
}
