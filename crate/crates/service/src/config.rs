use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use lensflow_core::engine::{Engine, EngineConfig};
use lensflow_core::exec::{ModelRouter, RemoteExecutor, RemoteVerifier, StandardVerifier, DEFAULT_EXECUTOR_TIMEOUT};
use lensflow_core::prompting::{PlannerBackend, PlannerBackendDescriptor, PromptConfig};
use lensflow_core::registry::Registry;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {detail}")]
    Read { path: PathBuf, detail: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// JSON configuration shared by the CLI and the service. Relative paths are
/// resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub engine: EngineConfig,
    pub prompt: PromptConfig,
    /// Registry file; the builtin mock roster when absent.
    pub registry: Option<PathBuf>,
    /// Tried in order before the rule-based fallback.
    pub planners: Vec<PlannerBackendDescriptor>,
    /// Remote similarity verifier used for images without a scene.
    pub verifier_endpoint: Option<String>,
    pub executor_timeout_ms: Option<u64>,
}

fn resolve(base: &Path, path: &mut PathBuf) {
    if path.is_relative() {
        *path = base.join(&*path);
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let read_err = |detail: String| ConfigError::Read {
            path: path.to_path_buf(),
            detail,
        };
        let text = std::fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.engine.run_dir);
        if let Some(registry) = &mut cfg.registry {
            resolve(base, registry);
        }
        for planner in &mut cfg.planners {
            if let Some(script) = &mut planner.script {
                resolve(base, script);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.engine
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.prompt
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for planner in &self.planners {
            planner
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load_registry(&self) -> Result<Registry, ConfigError> {
        match &self.registry {
            Some(path) if path.exists() => {
                Registry::load(path).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            _ => Ok(Registry::with_mocks()),
        }
    }

    pub fn planner_backends(&self) -> Result<Vec<PlannerBackend>, ConfigError> {
        self.planners
            .iter()
            .cloned()
            .map(|d| PlannerBackend::from_descriptor(d).map_err(|e| ConfigError::Invalid(e.to_string())))
            .collect()
    }

    pub fn build_engine(&self, registry: Arc<Registry>) -> Result<Engine, ConfigError> {
        let timeout = self
            .executor_timeout_ms
            .map(Duration::from_millis)
            .unwrap_or(DEFAULT_EXECUTOR_TIMEOUT);
        let verifier = StandardVerifier::new(
            self.verifier_endpoint
                .as_ref()
                .map(|endpoint| RemoteVerifier::new(endpoint.clone(), timeout)),
        );
        Ok(Engine::new(registry)
            .with_executor(Arc::new(ModelRouter::new(RemoteExecutor::new(timeout))))
            .with_verifier(Arc::new(verifier))
            .with_planners(self.planner_backends()?)
            .with_prompt(self.prompt.clone()))
    }
}
