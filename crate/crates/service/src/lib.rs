//! Chat, explanation and training service around `cdss-core`.

pub mod api;
pub mod chat;
pub mod config;
pub mod gateway;
pub mod jobs;

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use cdss_core::models::{ModelError, Registry};
use cdss_core::xai::ExplainOptions;

use crate::api::AppState;
use crate::chat::{ChatError, ChatService};
use crate::config::{Config, ConfigError};
use crate::gateway::{Gateway, GatewayError};
use crate::jobs::{JobQueue, RegistryHandle};

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("loading registry {path}: {source}")]
    Registry { path: PathBuf, source: ModelError },
    #[error(transparent)]
    Chat(#[from] ChatError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Loads the registry named by the config, or an empty one when none is set.
pub fn load_registry(cfg: &Config) -> Result<Registry, StartupError> {
    match &cfg.registry.path {
        Some(path) => Registry::load(path).map_err(|source| StartupError::Registry { path: path.clone(), source }),
        None => Ok(Registry::empty()),
    }
}

/// Wires every component from `cfg`. Must run inside a tokio runtime.
pub fn build_state(cfg: &Config) -> Result<AppState, StartupError> {
    let registry = RegistryHandle::new(load_registry(cfg)?);
    build_state_with(cfg, registry, Gateway::from_config(&cfg.gateway)?)
}

pub fn build_state_with(cfg: &Config, registry: RegistryHandle, gateway: Gateway) -> Result<AppState, StartupError> {
    let chat = ChatService::open(
        &cfg.chat.log_path,
        gateway,
        registry.clone(),
        cfg.affect.clone(),
        cfg.prompt.clone(),
        cfg.chat.predefined_queries.clone(),
    )?;
    let jobs = JobQueue::start(registry.clone(), cfg.registry.path.clone());
    Ok(AppState { chat: Arc::new(chat), jobs, registry, explain_opts: Arc::new(ExplainOptions::default()) })
}
