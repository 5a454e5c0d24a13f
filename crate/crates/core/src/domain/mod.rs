//! Domain types and the pure geometry/raster primitives shared by every
//! other module.

mod geom;
mod label;
mod mask;
mod proposal;
pub mod raster;
mod scene;

pub use geom::{BBox, Detection};
pub use label::{normalize_label, Label};
pub use mask::{mask_jaccard, palette_color, rle_encode, InstanceMask, MaskRle, Rgb};
pub use proposal::{ActionProposal, OperationKind, ProposalSet, UnknownOperation};
pub use scene::{rasterize_scene, ImageRef, ImageSource, SceneShape, SceneSpec, ShapeKind};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("label is empty after normalization")]
    EmptyLabel,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid mask encoding: {0}")]
    InvalidMask(String),
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("image error: {0}")]
    Image(String),
}
