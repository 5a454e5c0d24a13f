use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Condvar, Mutex};

use super::record::{Attempt, AttemptOutcome, ImageOutput, NodeResult, NodeStatus};
use super::{EngineConfig, SceneCatalog};
use crate::domain::{BBox, ImageRef, OperationKind};
use crate::exec::{ExecInput, ExecOutput, Executor, Verifier};
use crate::planning::{PlanDag, PlanNode};
use crate::registry::{ConcurrencyClass, ModelDescriptor, Registry, ENGINE_NATIVE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleEvent {
    Started { node_id: usize },
    Finished { node_id: usize, status: NodeStatus },
    Skipped { node_id: usize },
}

/// Receives scheduler events. `Finished` for a node is always delivered
/// before any of its dependents is `Started` or `Skipped`.
pub trait ScheduleObserver: Send + Sync {
    fn on_event(&self, event: &ScheduleEvent);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoopObserver;

impl ScheduleObserver for NoopObserver {
    fn on_event(&self, _: &ScheduleEvent) {}
}

/// One exclusive gate per Serial-class model id.
#[derive(Debug, Default)]
pub struct SerialGates(Mutex<HashMap<String, Arc<Mutex<()>>>>);

impl SerialGates {
    fn gate(&self, model_id: &str) -> Arc<Mutex<()>> {
        self.0
            .lock()
            .expect("gate map poisoned")
            .entry(model_id.to_string())
            .or_default()
            .clone()
    }
}

/// Everything a node needs besides its upstream results.
pub struct ScheduleContext<'a> {
    pub registry: &'a Registry,
    pub executor: &'a dyn Executor,
    pub verifier: &'a dyn Verifier,
    pub scenes: &'a SceneCatalog,
    pub images: &'a [ImageRef],
    pub cfg: &'a EngineConfig,
    pub gates: &'a SerialGates,
}

struct State {
    indegree: Vec<usize>,
    ready: BTreeSet<usize>,
    results: Vec<Option<NodeResult>>,
    done: usize,
}

/// Runs the DAG with at most `max_parallel` nodes in flight. The
/// lowest-numbered ready node goes first. Results come back in node order.
pub fn schedule(
    dag: &PlanDag,
    ctx: &ScheduleContext<'_>,
    observer: &dyn ScheduleObserver,
) -> Vec<NodeResult> {
    let n = dag.nodes.len();
    let index: HashMap<usize, usize> = dag
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| (node.node_id, i))
        .collect();
    let dependents: Vec<Vec<usize>> = dag
        .nodes
        .iter()
        .map(|node| dag.dependents(node.node_id).map(|d| index[&d.node_id]).collect())
        .collect();
    let indegree: Vec<usize> = dag.nodes.iter().map(|node| node.depends_on.len()).collect();
    let ready = (0..n).filter(|&i| indegree[i] == 0).collect();
    let state = Mutex::new(State {
        indegree,
        ready,
        results: vec![None; n],
        done: 0,
    });
    let wake = Condvar::new();

    let finish = |st: &mut State, i: usize, result: NodeResult| {
        for &j in &dependents[i] {
            st.indegree[j] -= 1;
            if st.indegree[j] == 0 {
                st.ready.insert(j);
            }
        }
        st.results[i] = Some(result);
        st.done += 1;
        wake.notify_all();
    };

    let worker = || loop {
        let mut st = state.lock().expect("scheduler state poisoned");
        let i = loop {
            if st.done == n {
                return;
            }
            if let Some(i) = st.ready.pop_first() {
                break i;
            }
            st = wake.wait(st).expect("scheduler state poisoned");
        };
        let node = &dag.nodes[i];
        let mut upstream = BTreeMap::new();
        let mut blocked = None;
        for dep in &node.depends_on {
            let result = st.results[index[dep]].as_ref().expect("dependency finished");
            if !result.succeeded() {
                blocked.get_or_insert(*dep);
            }
            upstream.insert(*dep, result.clone());
        }
        if let Some(dep) = blocked {
            let result = NodeResult::skipped(
                node.node_id,
                node.proposal.op,
                node.proposal.target.clone(),
                format!("dependency {dep} did not succeed"),
            );
            observer.on_event(&ScheduleEvent::Skipped {
                node_id: node.node_id,
            });
            finish(&mut st, i, result);
            continue;
        }
        observer.on_event(&ScheduleEvent::Started {
            node_id: node.node_id,
        });
        drop(st);
        let result = run_node(node, &upstream, ctx);
        let mut st = state.lock().expect("scheduler state poisoned");
        observer.on_event(&ScheduleEvent::Finished {
            node_id: node.node_id,
            status: result.status,
        });
        finish(&mut st, i, result);
    };

    let workers = ctx.cfg.max_parallel.clamp(1, n.max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(worker);
        }
    });
    state
        .into_inner()
        .expect("scheduler state poisoned")
        .results
        .into_iter()
        .map(|r| r.expect("every node finished"))
        .collect()
}

/// Boxes handed to a region-aware model: upstream Locate detections and
/// upstream Segment mask extents, per input image.
fn upstream_regions(
    node: &PlanNode,
    upstream: &BTreeMap<usize, NodeResult>,
    image_index: usize,
) -> Option<Vec<BBox>> {
    if node.whole_image || node.depends_on.is_empty() {
        return None;
    }
    let mut regions = Vec::new();
    for dep in &node.depends_on {
        let Some(result) = upstream.get(dep) else { continue };
        let Some(out) = result.outputs.iter().find(|o| o.image_index == image_index) else {
            continue;
        };
        match result.op {
            OperationKind::Locate => regions.extend(out.output.detections.iter().map(|d| d.bbox)),
            OperationKind::Segment => {
                regions.extend(out.output.masks.iter().filter_map(|m| m.mask.bounding_box()))
            }
            _ => {}
        }
    }
    Some(regions)
}

fn node_images(node: &PlanNode, images: &[ImageRef]) -> Vec<usize> {
    if node.proposal.image_refs.is_empty() {
        (0..images.len()).collect()
    } else {
        node.proposal
            .image_refs
            .iter()
            .copied()
            .filter(|&i| i < images.len())
            .collect()
    }
}

/// Model order for a node: the bound model first, then the rest of the
/// registry's fallback chain.
fn chain_for(node: &PlanNode, registry: &Registry) -> Result<Vec<ModelDescriptor>, String> {
    let mut chain = registry
        .fallback_chain(node.proposal.op)
        .map_err(|e| e.to_string())?;
    if let Some(bound) = &node.model_id {
        if let Some(pos) = chain.iter().position(|m| &m.id == bound) {
            let first = chain.remove(pos);
            chain.insert(0, first);
        }
    }
    Ok(chain)
}

enum AttemptResult {
    Scored(f64, Vec<ImageOutput>),
    Failed(AttemptOutcome),
}

fn attempt(
    node: &PlanNode,
    model: &ModelDescriptor,
    upstream: &BTreeMap<usize, NodeResult>,
    image_indices: &[usize],
    ctx: &ScheduleContext<'_>,
) -> AttemptResult {
    let mut worst = 1.0f64;
    let mut outputs = Vec::with_capacity(image_indices.len());
    for &i in image_indices {
        let image = &ctx.images[i];
        let input = ExecInput {
            op: node.proposal.op,
            target: node.proposal.target.clone(),
            instruction: node.proposal.instruction.clone(),
            image: image.clone(),
            regions: if model.accepts_regions {
                upstream_regions(node, upstream, i)
            } else {
                None
            },
        };
        let scene = ctx.scenes.get(&image.id);
        let executed = if model.concurrency_class == ConcurrencyClass::Serial {
            let gate = ctx.gates.gate(&model.id);
            let _held = gate.lock().unwrap_or_else(|p| p.into_inner());
            ctx.executor.execute(model, &input, scene)
        } else {
            ctx.executor.execute(model, &input, scene)
        };
        let output: ExecOutput = match executed {
            Ok(output) => output,
            Err(e) => {
                return AttemptResult::Failed(AttemptOutcome::ExecutionError(format!(
                    "image `{}`: {e}",
                    image.id
                )))
            }
        };
        match ctx.verifier.verify(&output, &input, scene) {
            Ok(record) => worst = worst.min(record.score),
            Err(e) => {
                return AttemptResult::Failed(AttemptOutcome::VerifierError(format!(
                    "image `{}`: {e}",
                    image.id
                )))
            }
        }
        outputs.push(ImageOutput {
            image_index: i,
            image_id: image.id.clone(),
            output,
        });
    }
    AttemptResult::Scored(worst, outputs)
}

/// Execute-then-verify loop for one node whose dependencies succeeded.
///
/// Each attempt runs the node on every image it covers and scores as the
/// minimum verifier score over those images. A model gets `1 + B` attempts
/// before the next model in the fallback chain takes over with a fresh
/// budget; the first attempt reaching the threshold ends the loop.
pub fn run_node(
    node: &PlanNode,
    upstream: &BTreeMap<usize, NodeResult>,
    ctx: &ScheduleContext<'_>,
) -> NodeResult {
    let mut result = NodeResult {
        node_id: node.node_id,
        op: node.proposal.op,
        target: node.proposal.target.clone(),
        model_id: None,
        attempts: Vec::new(),
        outputs: Vec::new(),
        status: NodeStatus::FailedExecution,
        best_score: None,
        error: None,
    };
    if node.proposal.op == OperationKind::Integrate {
        result.model_id = Some(ENGINE_NATIVE.to_string());
        result.status = NodeStatus::Succeeded;
        return result;
    }
    let chain = match chain_for(node, ctx.registry) {
        Ok(chain) => chain,
        Err(e) => {
            result.error = Some(e);
            return result;
        }
    };
    let image_indices = node_images(node, ctx.images);
    let tau = ctx.cfg.verify_threshold;
    for model in &chain {
        for _ in 0..=ctx.cfg.retry_budget {
            result.model_id = Some(model.id.clone());
            match attempt(node, model, upstream, &image_indices, ctx) {
                AttemptResult::Scored(score, outputs) => {
                    let passed = score >= tau;
                    result.attempts.push(Attempt {
                        model_id: model.id.clone(),
                        score: Some(score),
                        outcome: if passed {
                            AttemptOutcome::Passed
                        } else {
                            AttemptOutcome::BelowThreshold
                        },
                    });
                    if result.best_score.is_none_or(|best| score > best) {
                        result.best_score = Some(score);
                        result.outputs = outputs;
                    }
                    if passed {
                        result.status = NodeStatus::Succeeded;
                        result.best_score = Some(score);
                        result.error = None;
                        return result;
                    }
                    result.status = NodeStatus::FailedVerification;
                }
                AttemptResult::Failed(outcome) => {
                    let detail = match &outcome {
                        AttemptOutcome::ExecutionError(d) | AttemptOutcome::VerifierError(d) => {
                            d.clone()
                        }
                        _ => String::new(),
                    };
                    result.error = Some(format!("{}: {detail}", model.id));
                    result.attempts.push(Attempt {
                        model_id: model.id.clone(),
                        score: None,
                        outcome,
                    });
                }
            }
        }
    }
    if result.status == NodeStatus::FailedVerification {
        result.error = Some(format!(
            "best score {:.3} below threshold {tau} after {} attempts",
            result.best_score.unwrap_or(0.0),
            result.attempts.len()
        ));
    }
    result
}
