//! Capability catalog of executors and the model-selection policy.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::OperationKind;

pub const ENGINE_NATIVE: &str = "engine-native";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegistryError {
    #[error("model id `{0}` is already registered")]
    DuplicateModelId(String),
    #[error("invalid descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("no registered model can {0}")]
    NoCapableModel(OperationKind),
    #[error("registry file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum ConcurrencyClass {
    #[default]
    Concurrent,
    Serial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescriptor {
    pub id: String,
    pub capabilities: BTreeSet<OperationKind>,
    pub quality: f64,
    #[serde(default)]
    pub cost: f64,
    #[serde(default)]
    pub accepts_regions: bool,
    #[serde(default)]
    pub concurrency_class: ConcurrencyClass,
    /// `http(s)://` URL of a model server, or the name of a builtin mock.
    #[serde(default)]
    pub endpoint: Option<String>,
}

/// Where calls for a descriptor are routed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutorTarget<'a> {
    Builtin(&'a str),
    Remote(&'a str),
}

impl ModelDescriptor {
    pub fn new(id: impl Into<String>, capabilities: impl IntoIterator<Item = OperationKind>) -> Self {
        let id = id.into();
        Self {
            endpoint: Some(id.clone()),
            id,
            capabilities: capabilities.into_iter().collect(),
            quality: 0.5,
            cost: 0.0,
            accepts_regions: false,
            concurrency_class: ConcurrencyClass::Concurrent,
        }
    }

    pub fn quality(mut self, quality: f64) -> Self {
        self.quality = quality;
        self
    }

    pub fn cost(mut self, cost: f64) -> Self {
        self.cost = cost;
        self
    }

    pub fn accepts_regions(mut self, yes: bool) -> Self {
        self.accepts_regions = yes;
        self
    }

    pub fn serial(mut self) -> Self {
        self.concurrency_class = ConcurrencyClass::Serial;
        self
    }

    pub fn endpoint(mut self, endpoint: impl Into<String>) -> Self {
        self.endpoint = Some(endpoint.into());
        self
    }

    pub fn supports(&self, op: OperationKind) -> bool {
        self.capabilities.contains(&op)
    }

    pub fn target(&self) -> ExecutorTarget<'_> {
        let endpoint = self.endpoint.as_deref().unwrap_or(&self.id);
        if endpoint.starts_with("http://") || endpoint.starts_with("https://") {
            ExecutorTarget::Remote(endpoint)
        } else {
            ExecutorTarget::Builtin(endpoint)
        }
    }

    pub fn validate(&self) -> Result<(), RegistryError> {
        let bad = |msg: String| Err(RegistryError::InvalidDescriptor(msg));
        if self.id.trim().is_empty() {
            return bad("id is empty".into());
        }
        if self.capabilities.is_empty() {
            return bad(format!("`{}` has no capabilities", self.id));
        }
        if !(0.0..=1.0).contains(&self.quality) {
            return bad(format!("`{}` quality {} outside [0, 1]", self.id, self.quality));
        }
        if !(self.cost >= 0.0 && self.cost.is_finite()) {
            return bad(format!("`{}` cost {} must be finite and >= 0", self.id, self.cost));
        }
        Ok(())
    }
}

/// Quality descending, then cost ascending, then id.
pub fn policy_order(a: &ModelDescriptor, b: &ModelDescriptor) -> Ordering {
    b.quality
        .total_cmp(&a.quality)
        .then(a.cost.total_cmp(&b.cost))
        .then_with(|| a.id.cmp(&b.id))
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RegistryFile {
    models: Vec<ModelDescriptor>,
}

/// Thread-safe registry. Selections read a consistent snapshot; each
/// registration takes the write lock.
#[derive(Debug, Default)]
pub struct Registry {
    models: RwLock<BTreeMap<String, ModelDescriptor>>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mock roster used when no registry file is configured.
    pub fn with_mocks() -> Self {
        let registry = Self::new();
        for desc in default_descriptors() {
            registry.register(desc).expect("builtin roster is valid");
        }
        registry
    }

    pub fn from_descriptors(
        descriptors: impl IntoIterator<Item = ModelDescriptor>,
    ) -> Result<Self, RegistryError> {
        let registry = Self::new();
        for desc in descriptors {
            registry.register(desc)?;
        }
        Ok(registry)
    }

    pub fn register(&self, desc: ModelDescriptor) -> Result<(), RegistryError> {
        desc.validate()?;
        let mut models = self.models.write().expect("registry lock poisoned");
        if models.contains_key(&desc.id) {
            return Err(RegistryError::DuplicateModelId(desc.id));
        }
        models.insert(desc.id.clone(), desc);
        Ok(())
    }

    /// Descriptors sorted by id.
    pub fn list(&self) -> Vec<ModelDescriptor> {
        self.models
            .read()
            .expect("registry lock poisoned")
            .values()
            .cloned()
            .collect()
    }

    pub fn get(&self, id: &str) -> Option<ModelDescriptor> {
        self.models.read().expect("registry lock poisoned").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.models.read().expect("registry lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn supported_ops(&self) -> BTreeSet<OperationKind> {
        self.models
            .read()
            .expect("registry lock poisoned")
            .values()
            .flat_map(|d| d.capabilities.iter().copied())
            .collect()
    }

    pub fn select_model(
        &self,
        op: OperationKind,
        exclude: &BTreeSet<String>,
    ) -> Result<ModelDescriptor, RegistryError> {
        self.models
            .read()
            .expect("registry lock poisoned")
            .values()
            .filter(|d| d.supports(op) && !exclude.contains(&d.id))
            .min_by(|a, b| policy_order(a, b))
            .cloned()
            .ok_or(RegistryError::NoCapableModel(op))
    }

    /// Every capable model in policy order.
    pub fn fallback_chain(&self, op: OperationKind) -> Result<Vec<ModelDescriptor>, RegistryError> {
        let mut chain: Vec<ModelDescriptor> = self
            .models
            .read()
            .expect("registry lock poisoned")
            .values()
            .filter(|d| d.supports(op))
            .cloned()
            .collect();
        if chain.is_empty() {
            return Err(RegistryError::NoCapableModel(op));
        }
        chain.sort_by(policy_order);
        Ok(chain)
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RegistryError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile =
            serde_json::from_str(text).map_err(|e| RegistryError::Io(e.to_string()))?;
        Self::from_descriptors(file.models)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&RegistryFile { models: self.list() })
            .expect("descriptors serialize")
    }

    pub fn save(&self, path: &Path) -> Result<(), RegistryError> {
        std::fs::write(path, self.to_json())
            .map_err(|e| RegistryError::Io(format!("{}: {e}", path.display())))
    }
}

pub fn default_descriptors() -> Vec<ModelDescriptor> {
    use OperationKind::*;
    vec![
        ModelDescriptor::new("mock-detector", [Locate, Classify]).quality(0.8).cost(0.1),
        ModelDescriptor::new("mock-segmenter", [Segment])
            .quality(0.9)
            .cost(0.3)
            .accepts_regions(true),
        ModelDescriptor::new("mock-generator", [Generate, Edit]).quality(0.7).cost(1.0),
        ModelDescriptor::new("mock-captioner", [Caption]).quality(0.7).cost(0.2),
        ModelDescriptor::new(ENGINE_NATIVE, [Integrate]).quality(1.0),
    ]
}
