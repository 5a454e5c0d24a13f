use std::time::Duration;

use super::wire::{ExecRequest, ExecResponse, VerifyRequest, VerifyResponse, WireImage};
use super::{check_capability, ExecError, ExecInput, ExecOutput, Executor, VerifierScoreRecord};
use crate::domain::{ImageRef, SceneSpec};
use crate::registry::{ExecutorTarget, ModelDescriptor};

pub const DEFAULT_EXECUTOR_TIMEOUT: Duration = Duration::from_secs(120);

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::AgentBuilder::new().timeout(timeout).build()
}

fn join(base: &str, path: &str) -> String {
    format!("{}{path}", base.trim_end_matches('/'))
}

/// HTTP client for `POST {endpoint}/v1/execute`.
#[derive(Debug, Clone)]
pub struct RemoteExecutor {
    agent: ureq::Agent,
}

impl Default for RemoteExecutor {
    fn default() -> Self {
        Self::new(DEFAULT_EXECUTOR_TIMEOUT)
    }
}

impl RemoteExecutor {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: agent(timeout),
        }
    }

    pub fn call(&self, endpoint: &str, input: &ExecInput) -> Result<ExecOutput, ExecError> {
        let url = join(endpoint, "/v1/execute");
        let response = self
            .agent
            .post(&url)
            .send_json(ExecRequest::from(input))
            .map_err(|e| ExecError::RemoteUnavailable(format!("{url}: {e}")))?;
        let body: ExecResponse = response
            .into_json()
            .map_err(|e| ExecError::RemoteMalformed(format!("{url}: {e}")))?;
        body.into_output(&input.image)
    }
}

impl Executor for RemoteExecutor {
    fn execute(
        &self,
        model: &ModelDescriptor,
        input: &ExecInput,
        _scene: Option<&SceneSpec>,
    ) -> Result<ExecOutput, ExecError> {
        check_capability(model, input.op)?;
        match model.target() {
            ExecutorTarget::Remote(url) => self.call(url, input),
            ExecutorTarget::Builtin(name) => Err(ExecError::RemoteUnavailable(format!(
                "`{}` has no remote endpoint (builtin `{name}`)",
                model.id
            ))),
        }
    }
}

/// HTTP client for `POST {endpoint}/v1/verify`, returning a vision-text
/// similarity in [0, 1].
#[derive(Debug, Clone)]
pub struct RemoteVerifier {
    endpoint: String,
    agent: ureq::Agent,
}

impl RemoteVerifier {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.into(),
            agent: agent(timeout),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn similarity(&self, image: &ImageRef, text: &str) -> Result<VerifierScoreRecord, ExecError> {
        let url = join(&self.endpoint, "/v1/verify");
        let request = VerifyRequest {
            image: WireImage::from(image),
            text: text.to_string(),
        };
        let response = self
            .agent
            .post(&url)
            .send_json(&request)
            .map_err(|e| ExecError::VerifierUnavailable(format!("{url}: {e}")))?;
        let body: VerifyResponse = response
            .into_json()
            .map_err(|e| ExecError::VerifierUnavailable(format!("{url}: malformed reply: {e}")))?;
        if !(0.0..=1.0).contains(&body.score) {
            return Err(ExecError::VerifierUnavailable(format!(
                "{url}: score {} outside [0, 1]",
                body.score
            )));
        }
        Ok(VerifierScoreRecord::new(
            body.score,
            "remote-similarity",
            format!("{} vs {text:?}", image.id),
        ))
    }
}
