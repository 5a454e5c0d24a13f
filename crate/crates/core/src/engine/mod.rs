//! Runs a request end to end: planning, scheduling with verify-and-retry,
//! compositing, and persistence of the run record.

mod integrate;
mod record;
mod schedule;
mod store;

pub use integrate::{integrate, Integration};
pub use record::{
    ArtifactRef, Attempt, AttemptOutcome, CandidateRecord, ImageOutput, InstanceSummary,
    NodeResult, NodeStatus, NodeSummary, RunRecord, RunSummary,
};
pub use schedule::{
    run_node, schedule, NoopObserver, ScheduleContext, ScheduleEvent, ScheduleObserver,
    SerialGates,
};
pub use store::{RunStore, StagedRun};

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, LazyLock, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ImageRef, ImageSource, SceneSpec};
use crate::dsl::{parse_proposals, serialize_proposals};
use crate::exec::{Executor, ModelRouter, StandardVerifier, Verifier};
use crate::planning::{build_dag, score, select_best_for, DEFAULT_LAMBDA};
use crate::prompting::{
    build_prompt, generate_candidates, PlannerBackend, PlannerError, PromptConfig,
};
use crate::registry::Registry;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("planning failed: {0}")]
    PlanningFailed(String),
    #[error("compositing failed: {0}")]
    CompositingFailure(String),
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("run `{0}` not found")]
    RunNotFound(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    /// Verifier score a node must reach (tau).
    pub verify_threshold: f64,
    /// Extra attempts per model (B).
    pub retry_budget: u32,
    pub max_parallel: usize,
    pub lambda: f64,
    pub run_dir: PathBuf,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            verify_threshold: 0.75,
            retry_budget: 2,
            max_parallel: 4,
            lambda: DEFAULT_LAMBDA,
            run_dir: PathBuf::from("runs"),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..=1.0).contains(&self.verify_threshold) {
            return Err(EngineError::InvalidConfig(format!(
                "verify_threshold must be in [0, 1], got {}",
                self.verify_threshold
            )));
        }
        if self.max_parallel == 0 {
            return Err(EngineError::InvalidConfig("max_parallel must be >= 1".into()));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(EngineError::InvalidConfig(format!(
                "lambda must be a positive finite number, got {}",
                self.lambda
            )));
        }
        Ok(())
    }
}

/// Ground-truth scenes for the input images that have one, by image id.
#[derive(Debug, Clone, Default)]
pub struct SceneCatalog(HashMap<String, Arc<SceneSpec>>);

impl SceneCatalog {
    pub fn load(images: &[ImageRef]) -> Result<Self, EngineError> {
        let mut scenes = HashMap::new();
        for image in images {
            if let ImageSource::Scene(path) = &image.source {
                let scene = SceneSpec::load(path)
                    .map_err(|e| EngineError::InvalidInput(format!("image `{}`: {e}", image.id)))?;
                scenes.insert(image.id.clone(), Arc::new(scene));
            }
        }
        Ok(Self(scenes))
    }

    pub fn insert(&mut self, image_id: impl Into<String>, scene: SceneSpec) {
        self.0.insert(image_id.into(), Arc::new(scene));
    }

    pub fn get(&self, image_id: &str) -> Option<&SceneSpec> {
        self.0.get(image_id).map(AsRef::as_ref)
    }
}

static RUN_IDS: LazyLock<Mutex<ulid::Generator>> = LazyLock::new(|| Mutex::new(ulid::Generator::new()));

/// Lexicographically sortable, strictly increasing within the process.
pub fn new_run_id() -> String {
    let mut generator = RUN_IDS.lock().expect("id generator poisoned");
    match generator.generate() {
        Ok(id) => id.to_string(),
        Err(_) => ulid::Ulid::new().to_string(),
    }
}

pub(crate) fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Planner id recorded when every configured backend failed.
pub const FALLBACK_PLANNER: &str = "rule-based";

pub struct Engine {
    registry: Arc<Registry>,
    executor: Arc<dyn Executor>,
    verifier: Arc<dyn Verifier>,
    planners: Vec<PlannerBackend>,
    prompt: PromptConfig,
    observer: Arc<dyn ScheduleObserver>,
    gates: SerialGates,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("registry", &self.registry)
            .field("planners", &self.planners)
            .field("prompt", &self.prompt)
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Routes builtin models to the mocks and scores against scene ground
    /// truth. With no planners configured the rule-based planner is used.
    pub fn new(registry: Arc<Registry>) -> Self {
        Self {
            registry,
            executor: Arc::new(ModelRouter::default()),
            verifier: Arc::new(StandardVerifier::default()),
            planners: Vec::new(),
            prompt: PromptConfig::default(),
            observer: Arc::new(NoopObserver),
            gates: SerialGates::default(),
        }
    }

    pub fn with_executor(mut self, executor: Arc<dyn Executor>) -> Self {
        self.executor = executor;
        self
    }

    pub fn with_verifier(mut self, verifier: Arc<dyn Verifier>) -> Self {
        self.verifier = verifier;
        self
    }

    pub fn with_planners(mut self, planners: Vec<PlannerBackend>) -> Self {
        self.planners = planners;
        self
    }

    pub fn with_prompt(mut self, prompt: PromptConfig) -> Self {
        self.prompt = prompt;
        self
    }

    pub fn with_observer(mut self, observer: Arc<dyn ScheduleObserver>) -> Self {
        self.observer = observer;
        self
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn prompt_config(&self) -> &PromptConfig {
        &self.prompt
    }

    pub fn planners(&self) -> &[PlannerBackend] {
        &self.planners
    }

    /// Prompt, candidate generation and selection. Backends are tried in
    /// order; the first one yielding a parsable candidate wins. The
    /// rule-based planner is the last resort.
    pub fn plan(&self, request: &str, lambda: f64) -> Result<PlanOutcome, EngineError> {
        let prompt = build_prompt(&self.prompt, request).map_err(|e| match e {
            PlannerError::EmptyInput => EngineError::InvalidInput("request is empty".into()),
            other => EngineError::InvalidConfig(other.to_string()),
        })?;
        let supported = self.registry.supported_ops();
        let mut candidates = Vec::new();
        let mut failures = Vec::new();
        let fallback = PlannerBackend::rule_based();
        for backend in self.planners.iter().chain(std::iter::once(&fallback)) {
            let texts = match generate_candidates(backend, &prompt) {
                Ok(texts) => texts,
                Err(e) => {
                    failures.push(format!("{}: {e}", backend.id()));
                    continue;
                }
            };
            let mut parsed = Vec::new();
            for text in texts {
                let set = parse_proposals(&text).ok();
                candidates.push(CandidateRecord {
                    backend: backend.id().to_string(),
                    score: set
                        .as_ref()
                        .map(|s| score(request, s, lambda, &supported)),
                    parsed: set.is_some(),
                    text,
                });
                parsed.extend(set);
            }
            if parsed.is_empty() {
                failures.push(format!("{}: no parsable candidate", backend.id()));
                continue;
            }
            let (selected, score) = select_best_for(request, &parsed, lambda, &supported)
                .map_err(|e| EngineError::PlanningFailed(e.to_string()))?;
            return Ok(PlanOutcome {
                prompt,
                planner: backend.id().to_string(),
                candidates,
                selected,
                score,
            });
        }
        Err(EngineError::PlanningFailed(failures.join("; ")))
    }

    /// Compiles and schedules a given proposal set without planning,
    /// compositing or persistence.
    pub fn execute(
        &self,
        set: &crate::domain::ProposalSet,
        images: &[ImageRef],
        cfg: &EngineConfig,
    ) -> Result<(crate::planning::PlanDag, Vec<NodeResult>), EngineError> {
        if images.is_empty() {
            return Err(EngineError::InvalidInput("no images given".into()));
        }
        cfg.validate()?;
        let scenes = SceneCatalog::load(images)?;
        let mut dag = build_dag(set, images).map_err(|e| EngineError::PlanningFailed(e.to_string()))?;
        dag.bind_models(&self.registry);
        let ctx = ScheduleContext {
            registry: &self.registry,
            executor: self.executor.as_ref(),
            verifier: self.verifier.as_ref(),
            scenes: &scenes,
            images,
            cfg,
            gates: &self.gates,
        };
        let results = schedule(&dag, &ctx, self.observer.as_ref());
        Ok((dag, results))
    }

    /// Plans, executes, integrates and persists one request. Node failures
    /// are recorded in the returned run rather than raised.
    pub fn run_request(
        &self,
        request: &str,
        images: &[ImageRef],
        cfg: &EngineConfig,
    ) -> Result<RunRecord, EngineError> {
        let started_at_ms = now_ms();
        if request.trim().is_empty() {
            return Err(EngineError::InvalidInput("request is empty".into()));
        }
        if images.is_empty() {
            return Err(EngineError::InvalidInput("no images given".into()));
        }
        cfg.validate()?;
        let scenes = SceneCatalog::load(images)?;
        let plan = self.plan(request, cfg.lambda)?;
        let mut dag = build_dag(&plan.selected, images)
            .map_err(|e| EngineError::PlanningFailed(e.to_string()))?
            .with_request(request);
        dag.bind_models(&self.registry);

        let ctx = ScheduleContext {
            registry: &self.registry,
            executor: self.executor.as_ref(),
            verifier: self.verifier.as_ref(),
            scenes: &scenes,
            images,
            cfg,
            gates: &self.gates,
        };
        let node_results = schedule(&dag, &ctx, self.observer.as_ref());
        let integration = integrate(&dag, &node_results, &scenes);

        let run_id = new_run_id();
        let artifacts: Vec<ArtifactRef> = integration
            .composites
            .iter()
            .map(|(name, image_id, _)| ArtifactRef {
                name: name.clone(),
                image_id: image_id.clone(),
            })
            .collect();
        let mut summary = integration.summary;
        summary.planner = plan.planner.clone();
        summary.proposals = serialize_proposals(&plan.selected);
        let record = RunRecord {
            run_id,
            request: request.to_string(),
            prompt: plan.prompt,
            config: cfg.clone(),
            candidates: plan.candidates,
            selected: plan.selected,
            score: plan.score,
            dag,
            node_results,
            artifacts,
            summary,
            started_at_ms,
            finished_at_ms: now_ms(),
        };
        let files: Vec<(String, Vec<u8>)> = integration
            .composites
            .into_iter()
            .map(|(name, _, img)| (name, crate::domain::raster::encode_ppm(&img)))
            .collect();
        RunStore::new(&cfg.run_dir)?.persist(&record, &files)?;
        Ok(record)
    }
}

/// Result of the planning phase of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub prompt: String,
    pub planner: String,
    pub candidates: Vec<CandidateRecord>,
    pub selected: crate::domain::ProposalSet,
    pub score: crate::planning::ProposalScore,
}

#[cfg(test)]
mod tests;
