//! Executor and verifier contracts, scene-backed mock implementations and
//! the remote wire clients.

mod mock;
mod remote;
mod verify;
pub mod wire;

pub use mock::MockExecutor;
pub use remote::{RemoteExecutor, RemoteVerifier, DEFAULT_EXECUTOR_TIMEOUT};
pub use verify::{verify, verify_against_scene, StandardVerifier};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BBox, Detection, ImageRef, InstanceMask, Label, OperationKind, SceneSpec};
use crate::registry::{ExecutorTarget, ModelDescriptor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExecError {
    #[error("model `{model}` cannot {op}")]
    CapabilityMismatch { model: String, op: OperationKind },
    #[error("remote executor unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote executor reply is malformed: {0}")]
    RemoteMalformed(String),
    #[error("verifier unavailable: {0}")]
    VerifierUnavailable(String),
    #[error("no scene ground truth for image `{0}`")]
    MissingScene(String),
    #[error("unknown builtin executor `{0}`")]
    UnknownBuiltin(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecInput {
    pub op: OperationKind,
    pub target: Option<Label>,
    pub instruction: Option<String>,
    pub image: ImageRef,
    /// Upstream detection boxes; only honored by models that accept regions.
    pub regions: Option<Vec<BBox>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExecOutput {
    pub detections: Vec<Detection>,
    pub masks: Vec<InstanceMask>,
    pub image_out: Option<ImageRef>,
    pub caption: Option<String>,
    pub labels: Option<Vec<(Label, f64)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierScoreRecord {
    pub score: f64,
    pub method: String,
    pub detail: String,
}

impl VerifierScoreRecord {
    pub fn new(score: f64, method: impl Into<String>, detail: impl Into<String>) -> Self {
        Self {
            score: score.clamp(0.0, 1.0),
            method: method.into(),
            detail: detail.into(),
        }
    }
}

/// Runs one operation on one image.
pub trait Executor: Send + Sync {
    fn execute(
        &self,
        model: &ModelDescriptor,
        input: &ExecInput,
        scene: Option<&SceneSpec>,
    ) -> Result<ExecOutput, ExecError>;
}

/// Scores an executor output against its input.
pub trait Verifier: Send + Sync {
    fn verify(
        &self,
        output: &ExecOutput,
        input: &ExecInput,
        ground: Option<&SceneSpec>,
    ) -> Result<VerifierScoreRecord, ExecError>;
}

pub(crate) fn check_capability(model: &ModelDescriptor, op: OperationKind) -> Result<(), ExecError> {
    if model.supports(op) {
        Ok(())
    } else {
        Err(ExecError::CapabilityMismatch {
            model: model.id.clone(),
            op,
        })
    }
}

/// Sends builtin endpoints to the mocks and URLs to the remote client.
#[derive(Debug, Default)]
pub struct ModelRouter {
    mock: MockExecutor,
    remote: RemoteExecutor,
}

impl ModelRouter {
    pub fn new(remote: RemoteExecutor) -> Self {
        Self {
            mock: MockExecutor,
            remote,
        }
    }
}

impl Executor for ModelRouter {
    fn execute(
        &self,
        model: &ModelDescriptor,
        input: &ExecInput,
        scene: Option<&SceneSpec>,
    ) -> Result<ExecOutput, ExecError> {
        match model.target() {
            ExecutorTarget::Builtin(_) => self.mock.execute(model, input, scene),
            ExecutorTarget::Remote(_) => self.remote.execute(model, input, scene),
        }
    }
}
