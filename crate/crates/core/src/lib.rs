//! Orchestration core: turns a natural-language request over images into
//! scored action proposals, compiles them into a dependency DAG over
//! capability-matched executors, runs the DAG with a verify-and-retry loop
//! and composites the outputs into one response.

pub mod domain;
pub mod dsl;
pub mod engine;
pub mod exec;
pub mod planning;
pub mod prompting;
pub mod registry;

pub use domain::{
    ActionProposal, BBox, Detection, ImageRef, ImageSource, InstanceMask, Label, MaskRle,
    OperationKind, ProposalSet, Rgb, SceneShape, SceneSpec, ShapeKind,
};
