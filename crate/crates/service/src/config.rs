use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use edm_core::explain::DEFAULT_BACKGROUND;
use edm_core::learners::{ModelKind, Params};

/// Environment variables that override the config file, in the order they are
/// applied.
pub const ENV_OVERRIDES: [(&str, &str); 6] = [
    ("EDM_BIND", "listen address"),
    ("EDM_PORT", "listen port"),
    ("EDM_DATA_DIR", "session store directory"),
    ("EDM_MAX_UPLOAD_BYTES", "request body limit in bytes"),
    ("EDM_SEED", "default training seed"),
    ("EDM_EXPLAIN_TIMEOUT_SECS", "explanation time budget in seconds"),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid value {value:?} for {var}")]
    Env { var: String, value: String },
}

/// Shared by the service and the CLI. Every field has a default, so an
/// empty file is a valid config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub bind: String,
    pub port: u16,
    pub data_dir: PathBuf,
    pub max_upload_bytes: usize,
    pub seed: u64,
    pub folds: usize,
    pub background_size: usize,
    pub explain_timeout_secs: u64,
    /// Hyperparameter grids per kind; missing kinds use the built-in grid.
    pub grids: BTreeMap<ModelKind, Vec<Params>>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            bind: "127.0.0.1".into(),
            port: 8080,
            data_dir: PathBuf::from("edm-data"),
            max_upload_bytes: 64 * 1024 * 1024,
            seed: 42,
            folds: 5,
            background_size: DEFAULT_BACKGROUND,
            explain_timeout_secs: 30,
            grids: BTreeMap::new(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, path: &Path) -> Result<Config, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads `path` (defaults when `None`) and applies the process
    /// environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                Config::from_toml(&text, p)?
            }
            None => Config::default(),
        };
        config.apply_env(|k| std::env::var(k).ok())?;
        Ok(config)
    }

    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parse<T: std::str::FromStr>(var: &str, value: &str) -> Result<T, ConfigError> {
            value.trim().parse().map_err(|_| ConfigError::Env {
                var: var.into(),
                value: value.into(),
            })
        }
        for (name, _) in ENV_OVERRIDES {
            let Some(value) = var(name) else { continue };
            match name {
                "EDM_BIND" => self.bind = value,
                "EDM_PORT" => self.port = parse(name, &value)?,
                "EDM_DATA_DIR" => self.data_dir = PathBuf::from(value),
                "EDM_MAX_UPLOAD_BYTES" => self.max_upload_bytes = parse(name, &value)?,
                "EDM_SEED" => self.seed = parse(name, &value)?,
                "EDM_EXPLAIN_TIMEOUT_SECS" => self.explain_timeout_secs = parse(name, &value)?,
                _ => unreachable!(),
            }
        }
        Ok(())
    }
}
