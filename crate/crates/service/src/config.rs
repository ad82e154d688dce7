//! Service configuration: a TOML file whose keys can be overridden by
//! environment variables of the form `CDSS__SECTION__KEY`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use cdss_core::affect::AffectConfig;
use cdss_core::prompt::PromptConfig;

pub const ENV_PREFIX: &str = "CDSS__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("environment override {var}: {reason}")]
    Env { var: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { host: "127.0.0.1".into(), port: 8080 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    /// Registry JSON loaded at startup and rewritten after each training job.
    pub path: Option<PathBuf>,
}

pub fn default_queries() -> Vec<String> {
    ["Explain the latest prediction", "What features mattered most?", "What would change the outcome?", "Show the causal diagram"]
        .map(String::from)
        .to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChatConfig {
    pub log_path: PathBuf,
    pub predefined_queries: Vec<String>,
}

impl Default for ChatConfig {
    fn default() -> Self {
        Self { log_path: PathBuf::from("chat_log.jsonl"), predefined_queries: default_queries() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub mock: bool,
    pub url: Option<String>,
    pub key: Option<String>,
    pub model: String,
    pub timeout_s: f64,
    /// Extra attempts after the first failure.
    pub retries: u32,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self { mock: true, url: None, key: None, model: "gpt-4o".into(), timeout_s: 30.0, retries: 1 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub server: ServerConfig,
    pub registry: RegistryConfig,
    pub chat: ChatConfig,
    pub gateway: GatewayConfig,
    pub affect: AffectConfig,
    pub prompt: PromptConfig,
}

/// Parses an override value as a TOML scalar or array, falling back to a
/// plain string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Sets `value` at the key path named by `var`. The value is parsed as TOML
/// when that yields a valid config, otherwise it is kept as a string.
fn apply_override(table: &mut toml::Table, var: &str, value: &str) -> Result<(), ConfigError> {
    let path: Vec<String> = var[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::Env { var: var.into(), reason: "empty key segment".into() });
    }
    let attempt = |candidate: toml::Value| -> Result<toml::Table, String> {
        let mut t = table.clone();
        let mut cur = &mut t;
        for seg in &path[..path.len() - 1] {
            let entry = cur.entry(seg.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            cur = entry.as_table_mut().ok_or_else(|| format!("{seg} is not a section"))?;
        }
        cur.insert(path[path.len() - 1].clone(), candidate);
        toml::Value::Table(t.clone()).try_into::<Config>().map_err(|e| e.to_string())?;
        Ok(t)
    };
    let updated = attempt(parse_value(value))
        .or_else(|_| attempt(toml::Value::String(value.into())))
        .map_err(|reason| ConfigError::Env { var: var.into(), reason })?;
    *table = updated;
    Ok(())
}

impl Config {
    /// Builds the config from an optional file plus overrides given as
    /// `(variable, value)` pairs.
    pub fn from_sources(file: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Config, ConfigError> {
        let mut table = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Io { path: p.to_path_buf(), source })?;
                text.parse::<toml::Table>()?
            }
            None => toml::Table::new(),
        };
        let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        vars.sort();
        for (k, v) in &vars {
            apply_override(&mut table, k, v)?;
        }
        Ok(toml::Value::Table(table).try_into()?)
    }

    pub fn load(file: Option<&Path>) -> Result<Config, ConfigError> {
        Self::from_sources(file, std::env::vars())
    }
}
