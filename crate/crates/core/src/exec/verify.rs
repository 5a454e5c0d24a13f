use super::{ExecError, ExecInput, ExecOutput, RemoteVerifier, Verifier, VerifierScoreRecord};
use crate::domain::{mask_jaccard, rasterize_scene, MaskRle, OperationKind, SceneSpec};

fn union_all(width: u32, height: u32, masks: impl IntoIterator<Item = MaskRle>) -> MaskRle {
    masks
        .into_iter()
        .fold(MaskRle::empty(width, height), |acc, m| {
            acc.union(&m).unwrap_or(acc)
        })
}

/// Scores an output against scene ground truth.
///
/// Locate compares the union of predicted boxes with the union of the
/// target shapes' boxes; Segment compares the union of predicted masks with
/// the rasterized target. Other operations score 1 when their payload is
/// present.
pub fn verify_against_scene(
    output: &ExecOutput,
    input: &ExecInput,
    ground: &SceneSpec,
) -> VerifierScoreRecord {
    let (w, h) = (ground.width, ground.height);
    let presence = |present: bool, what: &str| {
        VerifierScoreRecord::new(
            if present { 1.0 } else { 0.0 },
            "payload-present",
            format!("{what} {}", if present { "present" } else { "missing" }),
        )
    };
    match input.op {
        OperationKind::Locate | OperationKind::Segment => {
            let Some(target) = &input.target else {
                return VerifierScoreRecord::new(0.0, "scene-jaccard", "no target");
            };
            let (predicted, truth, what) = if input.op == OperationKind::Locate {
                let predicted = union_all(
                    w,
                    h,
                    output.detections.iter().map(|d| MaskRle::from_box(w, h, &d.bbox)),
                );
                let truth = union_all(
                    w,
                    h,
                    ground.shapes_labeled(target).map(|s| MaskRle::from_box(w, h, &s.bbox())),
                );
                (predicted, truth, "boxes")
            } else {
                let predicted = union_all(
                    w,
                    h,
                    output
                        .masks
                        .iter()
                        .filter(|m| (m.mask.width(), m.mask.height()) == (w, h))
                        .map(|m| m.mask.clone()),
                );
                (predicted, rasterize_scene(ground, target), "masks")
            };
            let score = mask_jaccard(&predicted, &truth).unwrap_or(0.0);
            VerifierScoreRecord::new(
                score,
                "scene-jaccard",
                format!(
                    "{what} for `{target}`: {} predicted px, {} ground-truth px",
                    predicted.popcount(),
                    truth.popcount()
                ),
            )
        }
        OperationKind::Generate | OperationKind::Edit => presence(output.image_out.is_some(), "image_out"),
        OperationKind::Caption => presence(
            output.caption.as_deref().is_some_and(|c| !c.trim().is_empty()),
            "caption",
        ),
        OperationKind::Classify => presence(
            output.labels.as_ref().is_some_and(|l| !l.is_empty()),
            "labels",
        ),
        OperationKind::Integrate => VerifierScoreRecord::new(1.0, "engine-native", "integration"),
    }
}

/// Mock verification when ground truth is known, otherwise the remote
/// similarity endpoint.
pub fn verify(
    output: &ExecOutput,
    input: &ExecInput,
    ground: Option<&SceneSpec>,
    remote: Option<&RemoteVerifier>,
) -> Result<VerifierScoreRecord, ExecError> {
    if let Some(ground) = ground {
        return Ok(verify_against_scene(output, input, ground));
    }
    let remote = remote.ok_or_else(|| {
        ExecError::VerifierUnavailable(format!(
            "no ground truth for `{}` and no verifier endpoint configured",
            input.image.id
        ))
    })?;
    let text = match (&input.instruction, &input.target) {
        (Some(instruction), _) => instruction.clone(),
        (None, Some(target)) => format!("{} {target}", input.op),
        (None, None) => input.op.to_string(),
    };
    let image = output.image_out.as_ref().unwrap_or(&input.image);
    remote.similarity(image, &text)
}

#[derive(Debug, Clone, Default)]
pub struct StandardVerifier {
    pub remote: Option<RemoteVerifier>,
}

impl StandardVerifier {
    pub fn new(remote: Option<RemoteVerifier>) -> Self {
        Self { remote }
    }
}

impl Verifier for StandardVerifier {
    fn verify(
        &self,
        output: &ExecOutput,
        input: &ExecInput,
        ground: Option<&SceneSpec>,
    ) -> Result<VerifierScoreRecord, ExecError> {
        verify(output, input, ground, self.remote.as_ref())
    }
}
