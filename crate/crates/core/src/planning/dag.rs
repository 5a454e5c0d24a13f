use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::PlanningError;
use crate::domain::{ImageRef, OperationKind, ProposalSet};
use crate::dsl::validate_set;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanNode {
    pub node_id: usize,
    pub proposal: crate::domain::ActionProposal,
    /// Always ids of earlier nodes, so the graph is acyclic by construction.
    pub depends_on: Vec<usize>,
    pub model_id: Option<String>,
    /// Segment or Edit with no upstream Locate: works on the whole image.
    #[serde(default)]
    pub whole_image: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanDag {
    pub nodes: Vec<PlanNode>,
    pub request: String,
    pub image_refs: Vec<ImageRef>,
}

fn latest(
    nodes: &[PlanNode],
    op: OperationKind,
    target: Option<&crate::domain::Label>,
) -> Option<usize> {
    nodes
        .iter()
        .rev()
        .find(|n| n.proposal.op == op && n.proposal.target.as_ref() == target)
        .map(|n| n.node_id)
}

/// One node per proposal. Segment waits on the latest earlier Locate of the
/// same target; Edit on the latest Segment of its target, else the latest
/// Locate; Integrate on everything else. All other nodes are independent.
pub fn build_dag(set: &ProposalSet, images: &[ImageRef]) -> Result<PlanDag, PlanningError> {
    let diags = validate_set(set);
    if !diags.is_empty() {
        return Err(PlanningError::InvalidProposalSet(diags));
    }
    let mut nodes: Vec<PlanNode> = Vec::with_capacity(set.len());
    for (node_id, proposal) in set.iter().enumerate() {
        let target = proposal.target.as_ref();
        let (depends_on, whole_image) = match proposal.op {
            OperationKind::Segment => match latest(&nodes, OperationKind::Locate, target) {
                Some(dep) => (vec![dep], false),
                None => (vec![], true),
            },
            OperationKind::Edit if target.is_some() => {
                match latest(&nodes, OperationKind::Segment, target)
                    .or_else(|| latest(&nodes, OperationKind::Locate, target))
                {
                    Some(dep) => (vec![dep], false),
                    None => (vec![], true),
                }
            }
            OperationKind::Edit => (vec![], true),
            OperationKind::Integrate => ((0..node_id).collect(), false),
            _ => (vec![], false),
        };
        nodes.push(PlanNode {
            node_id,
            proposal: proposal.clone(),
            depends_on,
            model_id: None,
            whole_image,
        });
    }
    Ok(PlanDag {
        nodes,
        request: String::new(),
        image_refs: images.to_vec(),
    })
}

impl PlanDag {
    pub fn with_request(mut self, request: impl Into<String>) -> Self {
        self.request = request.into();
        self
    }

    /// Binds each node to the registry's preferred model for its operation.
    /// Nodes without a capable model stay unbound.
    pub fn bind_models(&mut self, registry: &Registry) {
        for node in &mut self.nodes {
            node.model_id = registry
                .select_model(node.proposal.op, &Default::default())
                .ok()
                .map(|d| d.id);
        }
    }

    pub fn node(&self, id: usize) -> Option<&PlanNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn dependents(&self, id: usize) -> impl Iterator<Item = &PlanNode> {
        self.nodes.iter().filter(move |n| n.depends_on.contains(&id))
    }

    /// `(dependency, dependent)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes
            .iter()
            .flat_map(|n| n.depends_on.iter().map(move |&d| (d, n.node_id)))
            .collect()
    }

    /// Kahn's algorithm; `None` if there is a cycle or a dangling edge.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let index = |id: usize| self.nodes.iter().position(|n| n.node_id == id);
        let mut indegree = vec![0usize; self.nodes.len()];
        for node in &self.nodes {
            for &dep in &node.depends_on {
                index(dep)?;
            }
            indegree[index(node.node_id)?] = node.depends_on.len();
        }
        let mut ready: VecDeque<usize> = (0..self.nodes.len()).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(i) = ready.pop_front() {
            let id = self.nodes[i].node_id;
            order.push(id);
            for dependent in self.dependents(id) {
                let j = index(dependent.node_id)?;
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    ready.push_back(j);
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ActionProposal as P;
    use crate::dsl::parse_proposals;
    use OperationKind::*;

    #[test]
    fn dogs_and_lemons_edges() {
        let set = parse_proposals(
            r#""locate" dogs; "segment" dogs; "locate" lemons; "segment" lemons; "integrate""#,
        )
        .unwrap();
        let dag = build_dag(&set, &[]).unwrap();
        let mut edges = dag.edges();
        edges.sort();
        assert_eq!(edges, vec![(0, 1), (0, 4), (1, 4), (2, 3), (2, 4), (3, 4)]);
        assert!(dag.nodes[0].depends_on.is_empty() && dag.nodes[2].depends_on.is_empty());
        assert!(dag.topological_order().is_some());
    }

    #[test]
    fn single_locate() {
        let set = ProposalSet::new(vec![P::on(Locate, "dogs")]).unwrap();
        let dag = build_dag(&set, &[]).unwrap();
        assert_eq!(dag.nodes.len(), 1);
        assert!(dag.edges().is_empty());
    }

    #[test]
    fn orphan_segment_is_whole_image() {
        let set = ProposalSet::new(vec![P::on(Segment, "dogs")]).unwrap();
        let dag = build_dag(&set, &[]).unwrap();
        assert!(dag.nodes[0].whole_image);
        assert!(dag.nodes[0].depends_on.is_empty());
    }

    #[test]
    fn edit_prefers_segment_and_latest_locate() {
        let set = ProposalSet::new(vec![
            P::on(Locate, "car"),
            P::on(Locate, "car"),
            P::on(Edit, "car").with_instruction("paint it"),
            P::on(Segment, "car"),
            P::on(Edit, "car").with_instruction("again"),
        ])
        .unwrap();
        let dag = build_dag(&set, &[]).unwrap();
        assert_eq!(dag.nodes[2].depends_on, vec![1]);
        assert_eq!(dag.nodes[3].depends_on, vec![1]);
        assert_eq!(dag.nodes[4].depends_on, vec![3]);
    }

    #[test]
    fn invalid_sets_are_rejected() {
        let set = ProposalSet::new(vec![P::integrate(), P::on(Locate, "x")]).unwrap();
        assert!(matches!(build_dag(&set, &[]), Err(PlanningError::InvalidProposalSet(_))));
    }

    #[test]
    fn binds_preferred_models() {
        let set = parse_proposals(r#""locate" dogs; "segment" dogs; "caption""#).unwrap();
        let mut dag = build_dag(&set, &[]).unwrap();
        dag.bind_models(&Registry::with_mocks());
        let bound: Vec<_> = dag.nodes.iter().map(|n| n.model_id.as_deref()).collect();
        assert_eq!(bound, [Some("mock-detector"), Some("mock-segmenter"), Some("mock-captioner")]);
    }
}
