use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Label;

/// Closed vocabulary of operations a plan may contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperationKind {
    Locate,
    Segment,
    Generate,
    Edit,
    Classify,
    Caption,
    Integrate,
}

impl OperationKind {
    pub const ALL: [OperationKind; 7] = [
        OperationKind::Locate,
        OperationKind::Segment,
        OperationKind::Generate,
        OperationKind::Edit,
        OperationKind::Classify,
        OperationKind::Caption,
        OperationKind::Integrate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OperationKind::Locate => "locate",
            OperationKind::Segment => "segment",
            OperationKind::Generate => "generate",
            OperationKind::Edit => "edit",
            OperationKind::Classify => "classify",
            OperationKind::Caption => "caption",
            OperationKind::Integrate => "integrate",
        }
    }

    /// Operations that cannot run without an object target.
    pub fn requires_target(self) -> bool {
        matches!(
            self,
            OperationKind::Locate | OperationKind::Segment | OperationKind::Classify
        )
    }

    /// Operations whose payload may carry a free-text instruction.
    pub fn takes_instruction(self) -> bool {
        matches!(self, OperationKind::Edit | OperationKind::Generate)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown operation `{0}`")]
pub struct UnknownOperation(pub String);

impl FromStr for OperationKind {
    type Err = UnknownOperation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OperationKind::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| UnknownOperation(s.to_string()))
    }
}

impl fmt::Display for OperationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One atomic operation of a decomposed request.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionProposal {
    pub op: OperationKind,
    pub target: Option<Label>,
    pub instruction: Option<String>,
    /// 0-based indices into the request's images; empty means every image.
    #[serde(default)]
    pub image_refs: Vec<usize>,
}

impl ActionProposal {
    pub fn new(op: OperationKind, target: Option<Label>) -> Self {
        Self {
            op,
            target,
            instruction: None,
            image_refs: Vec::new(),
        }
    }

    pub fn on(op: OperationKind, target: &str) -> Self {
        Self::new(op, Some(Label::new(target).expect("non-empty target")))
    }

    pub fn integrate() -> Self {
        Self::new(OperationKind::Integrate, None)
    }

    pub fn with_instruction(mut self, instruction: impl Into<String>) -> Self {
        self.instruction = Some(instruction.into());
        self
    }
}

impl fmt::Display for ActionProposal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.op)?;
        if let Some(target) = &self.target {
            write!(f, " {target}")?;
        }
        if let Some(instruction) = &self.instruction {
            write!(f, " :: {instruction}")?;
        }
        Ok(())
    }
}

/// Ordered, non-empty list of proposals.
///
/// Structural rules beyond non-emptiness (Integrate placement, required
/// targets) are checked by [`crate::dsl::validate_set`] so that scoring can
/// still reason about ill-formed candidates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ActionProposal>", into = "Vec<ActionProposal>")]
pub struct ProposalSet(Vec<ActionProposal>);

impl ProposalSet {
    /// Returns `None` for an empty list.
    pub fn new(items: Vec<ActionProposal>) -> Option<Self> {
        (!items.is_empty()).then_some(Self(items))
    }

    pub fn items(&self) -> &[ActionProposal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ActionProposal> {
        self.0.iter()
    }
}

impl TryFrom<Vec<ActionProposal>> for ProposalSet {
    type Error = &'static str;

    fn try_from(items: Vec<ActionProposal>) -> Result<Self, Self::Error> {
        ProposalSet::new(items).ok_or("proposal set must not be empty")
    }
}

impl From<ProposalSet> for Vec<ActionProposal> {
    fn from(set: ProposalSet) -> Self {
        set.0
    }
}

impl<'a> IntoIterator for &'a ProposalSet {
    type Item = &'a ActionProposal;
    type IntoIter = std::slice::Iter<'a, ActionProposal>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
