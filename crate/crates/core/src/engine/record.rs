use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{ImageRef, Label, OperationKind, ProposalSet, Rgb};
use crate::exec::ExecOutput;
use crate::planning::{PlanDag, ProposalScore};

use super::EngineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeStatus {
    Succeeded,
    FailedVerification,
    FailedExecution,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail")]
pub enum AttemptOutcome {
    Passed,
    BelowThreshold,
    ExecutionError(String),
    VerifierError(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub model_id: String,
    pub score: Option<f64>,
    pub outcome: AttemptOutcome,
}

/// Output of one node on one input image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageOutput {
    pub image_index: usize,
    pub image_id: String,
    pub output: ExecOutput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeResult {
    pub node_id: usize,
    pub op: OperationKind,
    pub target: Option<Label>,
    /// Model that produced the final output (or the last one tried).
    pub model_id: Option<String>,
    pub attempts: Vec<Attempt>,
    /// Best-scoring output per image; empty when nothing ran.
    pub outputs: Vec<ImageOutput>,
    pub status: NodeStatus,
    pub best_score: Option<f64>,
    pub error: Option<String>,
}

impl NodeResult {
    pub fn succeeded(&self) -> bool {
        self.status == NodeStatus::Succeeded
    }

    pub(crate) fn skipped(node_id: usize, op: OperationKind, target: Option<Label>, why: String) -> Self {
        Self {
            node_id,
            op,
            target,
            model_id: None,
            attempts: Vec::new(),
            outputs: Vec::new(),
            status: NodeStatus::Skipped,
            best_score: None,
            error: Some(why),
        }
    }
}

/// One raw planner reply and what became of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub backend: String,
    pub text: String,
    pub parsed: bool,
    pub score: Option<ProposalScore>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceSummary {
    /// Global emission order; selects the palette color.
    pub k: u64,
    pub image_index: usize,
    pub node_id: usize,
    pub label: Label,
    pub instance_id: u32,
    pub color: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: usize,
    pub op: OperationKind,
    pub target: Option<Label>,
    pub status: NodeStatus,
    pub model_id: Option<String>,
    pub attempts: usize,
    pub best_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub planner: String,
    pub proposals: String,
    /// Instances per target: masks when the target was segmented, boxes otherwise.
    pub target_counts: BTreeMap<String, usize>,
    pub nodes: Vec<NodeSummary>,
    pub instances: Vec<InstanceSummary>,
    pub boxes: Vec<InstanceSummary>,
    pub generated: Vec<ImageRef>,
    pub captions: Vec<String>,
    pub labels: Vec<(Label, f64)>,
    pub artifacts: Vec<String>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub name: String,
    pub image_id: String,
}

/// Persisted audit of one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub request: String,
    pub prompt: String,
    pub config: EngineConfig,
    pub candidates: Vec<CandidateRecord>,
    pub selected: ProposalSet,
    pub score: ProposalScore,
    pub dag: PlanDag,
    pub node_results: Vec<NodeResult>,
    pub artifacts: Vec<ArtifactRef>,
    pub summary: RunSummary,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
}
