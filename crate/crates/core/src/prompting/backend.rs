use std::collections::VecDeque;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{extract_user_input, rule_based_plan, PlannerError};
use crate::dsl::serialize_proposals;

pub const DEFAULT_PLANNER_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendKind {
    RuleBased,
    Remote,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannerBackendDescriptor {
    pub id: String,
    pub kind: BackendKind,
    /// Base URL; required for `Remote` and rejected otherwise.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "one")]
    pub n_candidates: usize,
    /// Reply file for `Scripted` backends.
    #[serde(default)]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
}

fn one() -> usize {
    1
}

impl PlannerBackendDescriptor {
    pub fn rule_based() -> Self {
        Self {
            id: "rule-based".into(),
            kind: BackendKind::RuleBased,
            endpoint: None,
            n_candidates: 1,
            script: None,
            timeout_ms: None,
        }
    }

    pub fn remote(id: impl Into<String>, endpoint: impl Into<String>, n_candidates: usize) -> Self {
        Self {
            id: id.into(),
            kind: BackendKind::Remote,
            endpoint: Some(endpoint.into()),
            n_candidates,
            script: None,
            timeout_ms: None,
        }
    }

    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.n_candidates == 0 {
            return Err(PlannerError::InvalidConfig(format!(
                "backend `{}`: n_candidates must be >= 1",
                self.id
            )));
        }
        if self.endpoint.is_some() != (self.kind == BackendKind::Remote) {
            return Err(PlannerError::InvalidConfig(format!(
                "backend `{}`: endpoint is required for remote backends and only for them",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
    n: usize,
}

#[derive(Debug, Deserialize)]
struct ScriptFile {
    replies: Vec<Vec<String>>,
}

enum Inner {
    RuleBased,
    Scripted(Mutex<VecDeque<Vec<String>>>),
    Remote { url: String, agent: ureq::Agent },
}

/// A configured planner backend ready to answer prompts.
pub struct PlannerBackend {
    descriptor: PlannerBackendDescriptor,
    inner: Inner,
}

impl std::fmt::Debug for PlannerBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlannerBackend")
            .field("descriptor", &self.descriptor)
            .finish_non_exhaustive()
    }
}

impl PlannerBackend {
    pub fn rule_based() -> Self {
        Self {
            descriptor: PlannerBackendDescriptor::rule_based(),
            inner: Inner::RuleBased,
        }
    }

    /// Scripted backend replaying `replies` in order, one list per call.
    pub fn scripted(id: impl Into<String>, replies: Vec<Vec<String>>) -> Self {
        let n = replies.iter().map(Vec::len).max().unwrap_or(1).max(1);
        Self {
            descriptor: PlannerBackendDescriptor {
                id: id.into(),
                kind: BackendKind::Scripted,
                endpoint: None,
                n_candidates: n,
                script: None,
                timeout_ms: None,
            },
            inner: Inner::Scripted(Mutex::new(replies.into())),
        }
    }

    pub fn from_descriptor(descriptor: PlannerBackendDescriptor) -> Result<Self, PlannerError> {
        descriptor.validate()?;
        let inner = match descriptor.kind {
            BackendKind::RuleBased => Inner::RuleBased,
            BackendKind::Scripted => {
                let path = descriptor.script.as_ref().ok_or_else(|| {
                    PlannerError::InvalidConfig(format!(
                        "scripted backend `{}` has no script file",
                        descriptor.id
                    ))
                })?;
                let text = std::fs::read_to_string(path).map_err(|e| {
                    PlannerError::InvalidConfig(format!("{}: {e}", path.display()))
                })?;
                let file: ScriptFile = serde_json::from_str(&text).map_err(|e| {
                    PlannerError::InvalidConfig(format!("{}: {e}", path.display()))
                })?;
                Inner::Scripted(Mutex::new(file.replies.into()))
            }
            BackendKind::Remote => {
                let base = descriptor.endpoint.as_deref().expect("validated");
                let timeout = descriptor
                    .timeout_ms
                    .map(Duration::from_millis)
                    .unwrap_or(DEFAULT_PLANNER_TIMEOUT);
                Inner::Remote {
                    url: format!("{}/v1/complete", base.trim_end_matches('/')),
                    agent: ureq::AgentBuilder::new().timeout(timeout).build(),
                }
            }
        };
        Ok(Self { descriptor, inner })
    }

    pub fn descriptor(&self) -> &PlannerBackendDescriptor {
        &self.descriptor
    }

    pub fn id(&self) -> &str {
        &self.descriptor.id
    }
}

/// Asks a backend for up to `n_candidates` raw proposal texts.
pub fn generate_candidates(
    backend: &PlannerBackend,
    prompt: &str,
) -> Result<Vec<String>, PlannerError> {
    let n = backend.descriptor.n_candidates.max(1);
    let mut candidates = match &backend.inner {
        Inner::RuleBased => {
            let set = rule_based_plan(extract_user_input(prompt))?;
            vec![serialize_proposals(&set)]
        }
        Inner::Scripted(replies) => replies
            .lock()
            .expect("script lock poisoned")
            .pop_front()
            .ok_or_else(|| PlannerError::BackendUnavailable("script exhausted".into()))?,
        Inner::Remote { url, agent } => call_remote(agent, url, prompt, n)?,
    };
    if candidates.is_empty() || candidates.iter().all(|c| c.trim().is_empty()) {
        return Err(PlannerError::BackendMalformed("no candidates in reply".into()));
    }
    candidates.truncate(n);
    Ok(candidates)
}

fn call_remote(
    agent: &ureq::Agent,
    url: &str,
    prompt: &str,
    n: usize,
) -> Result<Vec<String>, PlannerError> {
    let response = agent
        .post(url)
        .send_json(CompleteRequest { prompt, n })
        .map_err(|e| PlannerError::BackendUnavailable(format!("{url}: {e}")))?;
    let body: Value = response
        .into_json()
        .map_err(|e| PlannerError::BackendMalformed(format!("{url}: {e}")))?;
    let list = body
        .get("candidates")
        .and_then(Value::as_array)
        .ok_or_else(|| PlannerError::BackendMalformed("missing `candidates` array".into()))?;
    list.iter()
        .map(|c| {
            c.as_str()
                .map(str::to_string)
                .ok_or_else(|| PlannerError::BackendMalformed(format!("non-text candidate {c}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_in_order() {
        let backend = PlannerBackend::scripted(
            "s",
            vec![vec![r#""locate" dogs;"#.into()], vec!["a".into(), "b".into()]],
        );
        assert_eq!(
            generate_candidates(&backend, "x").unwrap(),
            vec![r#""locate" dogs;"#.to_string()]
        );
        assert_eq!(generate_candidates(&backend, "x").unwrap().len(), 2);
        assert!(matches!(
            generate_candidates(&backend, "x"),
            Err(PlannerError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn scripted_empty_reply_is_malformed() {
        let backend = PlannerBackend::scripted("s", vec![vec![]]);
        assert!(matches!(
            generate_candidates(&backend, "x"),
            Err(PlannerError::BackendMalformed(_))
        ));
    }

    #[test]
    fn scripted_file_loading() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.json");
        std::fs::write(&path, r#"{"replies": [["\"locate\" cats;"]]}"#).unwrap();
        let desc = PlannerBackendDescriptor {
            id: "file".into(),
            kind: BackendKind::Scripted,
            endpoint: None,
            n_candidates: 3,
            script: Some(path),
            timeout_ms: None,
        };
        let backend = PlannerBackend::from_descriptor(desc).unwrap();
        assert_eq!(generate_candidates(&backend, "p").unwrap(), vec!["\"locate\" cats;"]);
    }

    #[test]
    fn rule_based_reads_final_input_line() {
        let backend = PlannerBackend::rule_based();
        let prompt = "header\n\nInput: find cats\nOutput: \"locate\" cats;\n\nInput: highlight dogs\nOutput:";
        assert_eq!(
            generate_candidates(&backend, prompt).unwrap(),
            vec![r#""locate" dogs; "segment" dogs;"#.to_string()]
        );
    }

    #[test]
    fn descriptor_validation() {
        let mut d = PlannerBackendDescriptor::rule_based();
        d.endpoint = Some("http://x".into());
        assert!(d.validate().is_err());
        let mut r = PlannerBackendDescriptor::remote("llm", "http://x", 2);
        r.validate().unwrap();
        r.endpoint = None;
        assert!(r.validate().is_err());
        let mut z = PlannerBackendDescriptor::rule_based();
        z.n_candidates = 0;
        assert!(z.validate().is_err());
    }
}
