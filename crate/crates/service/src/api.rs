//! JSON bodies of the HTTP interface.

use std::path::Path;

use lensflow_core::domain::{Detection, ImageRef, ImageSource};
use lensflow_core::engine::{EngineConfig, RunSummary};
use serde::{Deserialize, Serialize};

/// An image given by local path (`.json` scene or PPM/PGM raster), or by
/// remote URI with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageSpec {
    Path(String),
    Remote { uri: String, width: u32, height: u32 },
}

impl ImageSpec {
    pub fn resolve(&self, id: impl Into<String>) -> Result<ImageRef, String> {
        match self {
            ImageSpec::Path(p) if p.trim().is_empty() => Err("image path is empty".into()),
            ImageSpec::Path(p) => ImageRef::from_path(id, Path::new(p)).map_err(|e| format!("{p}: {e}")),
            ImageSpec::Remote { uri, width, height } => {
                if uri.trim().is_empty() || *width == 0 || *height == 0 {
                    return Err("remote image needs a uri and non-zero dimensions".into());
                }
                Ok(ImageRef {
                    id: id.into(),
                    width: *width,
                    height: *height,
                    source: ImageSource::Uri(uri.clone()),
                })
            }
        }
    }
}

/// Id of the `i`-th image of a request.
pub fn image_id(i: usize) -> String {
    format!("image-{i}")
}

/// Per-request overrides of the engine configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_budget: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_parallel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl EngineOptions {
    pub fn apply(&self, base: &EngineConfig) -> EngineConfig {
        let mut cfg = base.clone();
        if let Some(v) = self.verify_threshold {
            cfg.verify_threshold = v;
        }
        if let Some(v) = self.retry_budget {
            cfg.retry_budget = v;
        }
        if let Some(v) = self.max_parallel {
            cfg.max_parallel = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        cfg
    }
}

/// `POST /v1/requests`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneralRequest {
    pub text: String,
    pub images: Vec<ImageSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<EngineOptions>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArtifactLink {
    pub name: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitResponse {
    pub run_id: String,
    pub summary: RunSummary,
    pub artifacts: Vec<ArtifactLink>,
}

pub fn artifact_url(run_id: &str, name: &str) -> String {
    format!("/v1/runs/{run_id}/artifacts/{name}")
}

/// `POST /v1/ops/label`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelObjectsRequest {
    pub object_name: String,
    pub image: ImageSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelObjectsResponse {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorDetail {
    pub kind: String,
    pub detail: String,
}

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

impl ErrorBody {
    pub fn new(kind: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            error: ErrorDetail {
                kind: kind.into(),
                detail: detail.into(),
            },
        }
    }
}
