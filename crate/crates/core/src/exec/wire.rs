//! JSON bodies of the executor and verifier protocols.
//!
//! Field order matches the documented schemas so encoded bodies are stable
//! byte-for-byte.

use serde::{Deserialize, Serialize};

use super::{ExecError, ExecInput, ExecOutput};
use crate::domain::{
    BBox, Detection, ImageRef, ImageSource, InstanceMask, Label, MaskRle, OperationKind,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireImage {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub uri: String,
}

impl From<&ImageRef> for WireImage {
    fn from(image: &ImageRef) -> Self {
        Self {
            id: image.id.clone(),
            width: image.width,
            height: image.height,
            uri: image.uri(),
        }
    }
}

impl From<WireImage> for ImageRef {
    fn from(image: WireImage) -> Self {
        ImageRef {
            id: image.id,
            width: image.width,
            height: image.height,
            source: ImageSource::Uri(image.uri),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecRequest {
    pub op: OperationKind,
    pub target: Option<Label>,
    pub instruction: Option<String>,
    pub image: WireImage,
    pub regions: Option<Vec<BBox>>,
}

impl From<&ExecInput> for ExecRequest {
    fn from(input: &ExecInput) -> Self {
        Self {
            op: input.op,
            target: input.target.clone(),
            instruction: input.instruction.clone(),
            image: WireImage::from(&input.image),
            regions: input.regions.clone(),
        }
    }
}

impl From<ExecRequest> for ExecInput {
    fn from(req: ExecRequest) -> Self {
        ExecInput {
            op: req.op,
            target: req.target,
            instruction: req.instruction,
            image: req.image.into(),
            regions: req.regions,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireMask {
    pub label: Label,
    pub instance_id: u32,
    pub rle: MaskRle,
}

/// Every payload key is optional on input; a reply with none of them is
/// malformed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecResponse {
    #[serde(default)]
    pub detections: Option<Vec<Detection>>,
    #[serde(default)]
    pub masks: Option<Vec<WireMask>>,
    #[serde(default)]
    pub image_out: Option<WireImage>,
    #[serde(default)]
    pub caption: Option<String>,
    #[serde(default)]
    pub labels: Option<Vec<(Label, f64)>>,
}

impl From<&ExecOutput> for ExecResponse {
    fn from(out: &ExecOutput) -> Self {
        Self {
            detections: Some(out.detections.clone()),
            masks: Some(
                out.masks
                    .iter()
                    .map(|m| WireMask {
                        label: m.label.clone(),
                        instance_id: m.instance_id,
                        rle: m.mask.clone(),
                    })
                    .collect(),
            ),
            image_out: out.image_out.as_ref().map(WireImage::from),
            caption: out.caption.clone(),
            labels: out.labels.clone(),
        }
    }
}

impl ExecResponse {
    /// Checks the reply against the request image and converts it.
    pub fn into_output(self, image: &ImageRef) -> Result<ExecOutput, ExecError> {
        let malformed = |msg: String| Err(ExecError::RemoteMalformed(msg));
        if self.detections.is_none()
            && self.masks.is_none()
            && self.image_out.is_none()
            && self.caption.is_none()
            && self.labels.is_none()
        {
            return malformed("reply carries no payload field".into());
        }
        let detections = self.detections.unwrap_or_default();
        for d in &detections {
            if !(0.0..=1.0).contains(&d.confidence) {
                return malformed(format!("confidence {} outside [0, 1]", d.confidence));
            }
            if d.bbox.w == 0 || d.bbox.h == 0 || !d.bbox.fits_in(image.width, image.height) {
                return malformed(format!("box {:?} outside {}x{}", d.bbox, image.width, image.height));
            }
        }
        let mut masks = Vec::new();
        for m in self.masks.unwrap_or_default() {
            if (m.rle.width(), m.rle.height()) != (image.width, image.height) {
                return malformed(format!(
                    "mask {}x{} does not match image {}x{}",
                    m.rle.width(),
                    m.rle.height(),
                    image.width,
                    image.height
                ));
            }
            masks.push(InstanceMask::new(m.label, m.instance_id, m.rle));
        }
        if let Some(labels) = &self.labels {
            if labels.iter().any(|(_, c)| !(0.0..=1.0).contains(c)) {
                return malformed("label confidence outside [0, 1]".into());
            }
        }
        Ok(ExecOutput {
            detections,
            masks,
            image_out: self.image_out.map(ImageRef::from),
            caption: self.caption,
            labels: self.labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyRequest {
    pub image: WireImage,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyResponse {
    pub score: f64,
}
