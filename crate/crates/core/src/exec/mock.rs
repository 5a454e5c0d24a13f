use std::collections::BTreeMap;

use super::{check_capability, ExecError, ExecInput, ExecOutput, Executor};
use crate::domain::{
    BBox, Detection, ImageRef, ImageSource, InstanceMask, OperationKind, SceneSpec,
};
use crate::registry::ModelDescriptor;

pub const MOCK_CONFIDENCE: f64 = 0.9;

/// Deterministic executors that read answers off the scene ground truth.
///
/// Detection returns each matching shape's bounding box. Segmentation emits
/// one mask per region, made of the target's shapes clipped to that region;
/// without regions it uses the target shapes' own boxes, in declaration
/// order. Generation and editing return a provenance-stamped copy of the
/// input image.
#[derive(Debug, Default, Clone, Copy)]
pub struct MockExecutor;

impl Executor for MockExecutor {
    fn execute(
        &self,
        model: &ModelDescriptor,
        input: &ExecInput,
        scene: Option<&SceneSpec>,
    ) -> Result<ExecOutput, ExecError> {
        check_capability(model, input.op)?;
        let mut out = ExecOutput::default();
        match input.op {
            OperationKind::Generate | OperationKind::Edit => {
                let instruction = input.instruction.clone().unwrap_or_default();
                out.image_out = Some(ImageRef {
                    id: format!("{}-{}", input.image.id, input.op),
                    width: input.image.width,
                    height: input.image.height,
                    source: ImageSource::Generated {
                        parent: input.image.id.clone(),
                        instruction,
                    },
                });
                return Ok(out);
            }
            OperationKind::Integrate => {
                return Err(ExecError::UnknownBuiltin("integrate runs inside the engine".into()))
            }
            _ => {}
        }
        let scene = scene.ok_or_else(|| ExecError::MissingScene(input.image.id.clone()))?;
        match input.op {
            OperationKind::Locate => {
                if let Some(target) = &input.target {
                    for shape in scene.shapes_labeled(target) {
                        out.detections.push(Detection {
                            label: target.clone(),
                            bbox: shape.bbox(),
                            confidence: MOCK_CONFIDENCE,
                        });
                    }
                }
            }
            OperationKind::Classify => {
                if let Some(target) = &input.target {
                    let present = scene.shapes_labeled(target).next().is_some();
                    let confidence = if present { MOCK_CONFIDENCE } else { 0.0 };
                    out.labels = Some(vec![(target.clone(), confidence)]);
                }
            }
            OperationKind::Segment => {
                if let Some(target) = &input.target {
                    let regions: Vec<BBox> = match (&input.regions, model.accepts_regions) {
                        (Some(regions), true) => regions.clone(),
                        _ => scene.shapes_labeled(target).map(|s| s.bbox()).collect(),
                    };
                    for (i, region) in regions.iter().enumerate() {
                        let mask = scene.rasterize_shapes(scene.shapes_labeled(target), Some(region));
                        out.masks.push(InstanceMask::new(target.clone(), i as u32, mask));
                    }
                }
            }
            OperationKind::Caption => out.caption = Some(describe(scene)),
            OperationKind::Generate | OperationKind::Edit | OperationKind::Integrate => {
                unreachable!()
            }
        }
        Ok(out)
    }
}

fn describe(scene: &SceneSpec) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for shape in &scene.shapes {
        *counts.entry(shape.label.as_str()).or_default() += 1;
    }
    if counts.is_empty() {
        return "an empty scene".to_string();
    }
    let parts: Vec<String> = counts.iter().map(|(l, n)| format!("{n} x {l}")).collect();
    format!("a scene containing {}", parts.join(" and "))
}
