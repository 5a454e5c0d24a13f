//! Candidate scoring and selection, DAG compilation, and planner
//! evaluation against labeled corpora.

mod dag;
mod eval;
mod score;

pub use dag::{build_dag, PlanDag, PlanNode};
pub use eval::{evaluate_backend, load_corpus, parse_corpus, CorpusItem, EvalReport, ItemReport};
pub use score::{
    congruence, discrepancy, regularizer, regularizer_for, score, select_best, select_best_for,
    ProposalScore, DEFAULT_LAMBDA,
};

use thiserror::Error;

use crate::dsl::ParseDiagnostic;
use crate::prompting::PlannerError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanningError {
    #[error("no candidate proposal sets to choose from")]
    NoCandidates,
    #[error("invalid proposal set: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidProposalSet(Vec<ParseDiagnostic>),
    #[error("lambda must be a positive finite number, got {0}")]
    InvalidLambda(f64),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}
