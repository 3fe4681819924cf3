//! Run configuration: flags, then `RADLABEL_*` environment variables, then the TOML file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use radlabel::extractor::BackendDescriptor;
use radlabel::EntityType;
use radlabel_review::ServiceConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Category, CliError, CliResult};
use crate::GlobalArgs;

pub const DEFAULT_SEED: u64 = 13;

/// Contents of `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub corpus: Option<PathBuf>,
    pub thresholds: Option<String>,
    pub proportion: Option<f64>,
    /// Entity label to backend descriptor.
    #[serde(default)]
    pub backends: BTreeMap<String, String>,
    pub service: Option<ServiceConfig>,
}

/// Validated settings shared by every command; recorded in each manifest.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub out: PathBuf,
    pub seed: u64,
    pub corpus: Option<PathBuf>,
    pub thresholds: Option<String>,
    pub proportion: Option<f64>,
    pub backends: BTreeMap<EntityType, String>,
    #[serde(skip)]
    pub descriptors: BTreeMap<EntityType, BackendDescriptor>,
    #[serde(skip)]
    pub service: Option<ServiceConfig>,
}

fn config_err(msg: impl std::fmt::Display) -> CliError {
    CliError::new("config", Category::Config, msg)
}

fn load_file(path: &Path) -> CliResult<FileConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::new("config", Category::MissingInput, format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn parse_backend(spec: &str) -> CliResult<(EntityType, BackendDescriptor)> {
    let (entity, desc) = spec
        .split_once('=')
        .ok_or_else(|| config_err(format!("backend {spec:?}: expected <entity>=<kind>:<param>")))?;
    let entity: EntityType = entity.trim().parse().map_err(|e| config_err(format!("backend {spec:?}: {e}")))?;
    let desc: BackendDescriptor = desc.trim().parse().map_err(|e| config_err(format!("backend {spec:?}: {e}")))?;
    Ok((entity, desc))
}

impl RunConfig {
    /// Merge the three sources and validate before any stage runs.
    ///
    /// clap has already folded environment variables into `args`, so a value
    /// present there wins over the file.
    pub fn resolve(args: &GlobalArgs) -> CliResult<Self> {
        let file = match &args.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let mut backend_specs: Vec<String> = file.backends.iter().map(|(k, v)| format!("{k}={v}")).collect();
        backend_specs.extend(args.backends.iter().cloned());
        let mut descriptors = BTreeMap::new();
        for spec in backend_specs.iter().filter(|s| !s.trim().is_empty()) {
            let (entity, desc) = parse_backend(spec)?;
            descriptors.insert(entity, desc);
        }
        let proportion = args.proportion.or(file.proportion);
        if let Some(p) = proportion {
            if !(p > 0.0 && p <= 1.0) {
                return Err(config_err(format!("proportion must be in (0, 1], got {p}")));
            }
        }
        Ok(Self {
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            seed: args.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            corpus: args.corpus.clone().or(file.corpus),
            thresholds: args.thresholds.clone().or(file.thresholds),
            proportion,
            backends: descriptors.iter().map(|(e, d)| (*e, d.to_string())).collect(),
            descriptors,
            service: file.service,
        })
    }

    pub fn corpus(&self, stage: &str) -> CliResult<&Path> {
        self.corpus
            .as_deref()
            .ok_or_else(|| CliError::new(stage, Category::Config, "--corpus is required"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args() -> GlobalArgs {
        GlobalArgs {
            config: None,
            out: None,
            seed: None,
            corpus: None,
            backends: vec![],
            thresholds: None,
            proportion: None,
            verbose: 0,
        }
    }

    #[test]
    fn flags_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\nproportion = 0.9\n[backends]\n\"OBS-U\" = \"rule:default\"\n").unwrap();
        let mut a = args();
        a.config = Some(path);
        a.seed = Some(9);
        a.backends = vec!["ANAT-DP=replay:x.jsonl".into()];
        let cfg = RunConfig::resolve(&a).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.proportion, Some(0.9));
        assert_eq!(cfg.backends.len(), 2);
        assert_eq!(cfg.backends[&EntityType::AnatDp], "replay:x.jsonl");
    }

    #[test]
    fn bad_values_are_config_errors() {
        let mut a = args();
        a.proportion = Some(1.5);
        assert_eq!(RunConfig::resolve(&a).unwrap_err().category, Category::Config);
        let mut a = args();
        a.backends = vec!["ANAT-DP=ftp:x".into()];
        assert_eq!(RunConfig::resolve(&a).unwrap_err().category, Category::Config);
    }
}
