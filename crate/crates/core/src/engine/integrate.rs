use std::collections::{BTreeMap, BTreeSet};

use image::RgbImage;

use super::record::{InstanceSummary, NodeResult, NodeSummary, RunSummary};
use super::{EngineError, SceneCatalog};
use crate::domain::raster::{load_raster, render_scene};
use crate::domain::{palette_color, BBox, ImageRef, ImageSource, MaskRle, OperationKind, Rgb};
use crate::planning::PlanDag;

pub const NO_INSTANCES_NOTE: &str = "no instances found";

/// Composited images `(artifact name, image id, pixels)` plus the summary.
#[derive(Debug, Clone)]
pub struct Integration {
    pub composites: Vec<(String, String, RgbImage)>,
    pub summary: RunSummary,
}

pub fn composite_name(image_index: usize) -> String {
    format!("composite-{image_index}.ppm")
}

/// Base pixels of an input image: scenes are rendered, rasters decoded.
pub fn base_image(image: &ImageRef, scenes: &SceneCatalog) -> Result<RgbImage, EngineError> {
    let img = match (&image.source, scenes.get(&image.id)) {
        (_, Some(scene)) => render_scene(scene),
        (ImageSource::Raster(path), None) => {
            load_raster(path).map_err(|e| EngineError::CompositingFailure(e.to_string()))?
        }
        _ => {
            return Err(EngineError::CompositingFailure(format!(
                "image `{}` has no local pixels",
                image.id
            )))
        }
    };
    if img.dimensions() != (image.width, image.height) {
        return Err(EngineError::CompositingFailure(format!(
            "image `{}` is {}x{} but was declared {}x{}",
            image.id,
            img.width(),
            img.height(),
            image.width,
            image.height
        )));
    }
    Ok(img)
}

/// Alpha 0.5 blend, rounding half up.
fn blend(base: [u8; 3], color: Rgb) -> [u8; 3] {
    let mix = |b: u8, c: u8| ((u16::from(b) + u16::from(c) + 1) / 2) as u8;
    [mix(base[0], color.0[0]), mix(base[1], color.0[1]), mix(base[2], color.0[2])]
}

/// Blends `mask` into `img` in `color`.
pub fn blend_mask(img: &mut RgbImage, mask: &MaskRle, color: Rgb) -> Result<(), EngineError> {
    if (mask.width(), mask.height()) != img.dimensions() {
        return Err(EngineError::CompositingFailure(format!(
            "mask is {}x{} but image is {}x{}",
            mask.width(),
            mask.height(),
            img.width(),
            img.height()
        )));
    }
    let width = u64::from(img.width());
    let mut pos = 0u64;
    for (r, &run) in mask.runs().iter().enumerate() {
        if r % 2 == 1 {
            for p in pos..pos + run {
                let (x, y) = ((p % width) as u32, (p / width) as u32);
                let px = img.get_pixel_mut(x, y);
                px.0 = blend(px.0, color);
            }
        }
        pos += run;
    }
    Ok(())
}

/// 1 px rectangle outline, clipped to the image.
pub fn outline_box(img: &mut RgbImage, b: &BBox, color: Rgb) {
    let (w, h) = img.dimensions();
    let x1 = (b.x + b.w - 1).min(w.saturating_sub(1));
    let y1 = (b.y + b.h - 1).min(h.saturating_sub(1));
    if b.x >= w || b.y >= h {
        return;
    }
    for x in b.x..=x1 {
        img.put_pixel(x, b.y, image::Rgb(color.0));
        img.put_pixel(x, y1, image::Rgb(color.0));
    }
    for y in b.y..=y1 {
        img.put_pixel(b.x, y, image::Rgb(color.0));
        img.put_pixel(x1, y, image::Rgb(color.0));
    }
}

/// Composites every succeeded node's masks and boxes onto each input image
/// and summarizes the run.
///
/// Mask colors follow a global emission counter: node order, then image
/// order, then mask order. Boxes are drawn only for Locate nodes that no
/// Segment consumes, with their own counter. Images that cannot be
/// composited are reported in the notes instead of failing the run.
pub fn integrate(dag: &PlanDag, results: &[NodeResult], scenes: &SceneCatalog) -> Integration {
    let segmented_locates: BTreeSet<usize> = dag
        .nodes
        .iter()
        .filter(|n| n.proposal.op == OperationKind::Segment)
        .flat_map(|n| n.depends_on.iter().copied())
        .collect();
    let succeeded: Vec<&NodeResult> = results.iter().filter(|r| r.succeeded()).collect();

    let mut summary = RunSummary {
        planner: String::new(),
        proposals: String::new(),
        target_counts: BTreeMap::new(),
        nodes: results
            .iter()
            .map(|r| NodeSummary {
                node_id: r.node_id,
                op: r.op,
                target: r.target.clone(),
                status: r.status,
                model_id: r.model_id.clone(),
                attempts: r.attempts.len(),
                best_score: r.best_score,
            })
            .collect(),
        instances: Vec::new(),
        boxes: Vec::new(),
        generated: Vec::new(),
        captions: Vec::new(),
        labels: Vec::new(),
        artifacts: Vec::new(),
        notes: Vec::new(),
    };

    let mut k = 0u64;
    let mut masks_by_image: BTreeMap<usize, Vec<(&MaskRle, Rgb)>> = BTreeMap::new();
    let mut boxes_by_image: BTreeMap<usize, Vec<(BBox, Rgb)>> = BTreeMap::new();
    let mut kb = 0u64;
    for result in &succeeded {
        for out in &result.outputs {
            for mask in &out.output.masks {
                let color = palette_color(k);
                summary.instances.push(InstanceSummary {
                    k,
                    image_index: out.image_index,
                    node_id: result.node_id,
                    label: mask.label.clone(),
                    instance_id: mask.instance_id,
                    color,
                });
                masks_by_image.entry(out.image_index).or_default().push((&mask.mask, color));
                k += 1;
            }
            if result.op == OperationKind::Locate && !segmented_locates.contains(&result.node_id) {
                for det in &out.output.detections {
                    let color = palette_color(kb);
                    summary.boxes.push(InstanceSummary {
                        k: kb,
                        image_index: out.image_index,
                        node_id: result.node_id,
                        label: det.label.clone(),
                        instance_id: kb as u32,
                        color,
                    });
                    boxes_by_image.entry(out.image_index).or_default().push((det.bbox, color));
                    kb += 1;
                }
            }
            summary.generated.extend(out.output.image_out.clone());
            summary.captions.extend(out.output.caption.clone());
            summary.labels.extend(out.output.labels.iter().flatten().cloned());
        }
    }

    // Per target: masks of its last succeeded Segment, else detections of
    // its last succeeded Locate.
    let mut per_target: BTreeMap<String, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for result in &succeeded {
        let Some(target) = &result.target else { continue };
        let count = |f: fn(&crate::exec::ExecOutput) -> usize| {
            result.outputs.iter().map(|o| f(&o.output)).sum::<usize>()
        };
        let entry = per_target.entry(target.as_str().to_string()).or_default();
        match result.op {
            OperationKind::Segment => entry.0 = Some(count(|o| o.masks.len())),
            OperationKind::Locate => entry.1 = Some(count(|o| o.detections.len())),
            _ => {}
        }
    }
    for (target, (masks, boxes)) in per_target {
        if let Some(n) = masks.or(boxes) {
            summary.target_counts.insert(target, n);
        }
    }
    let finds = results
        .iter()
        .any(|r| matches!(r.op, OperationKind::Locate | OperationKind::Segment));
    if finds && summary.instances.is_empty() && summary.boxes.is_empty() {
        summary.notes.push(NO_INSTANCES_NOTE.to_string());
    }
    for result in results.iter().filter(|r| !r.succeeded()) {
        summary.notes.push(format!(
            "node {} ({:?}): {}",
            result.node_id,
            result.status,
            result.error.as_deref().unwrap_or("no detail")
        ));
    }

    let mut composites = Vec::new();
    for (i, image) in dag.image_refs.iter().enumerate() {
        let drawn = base_image(image, scenes).and_then(|mut img| {
            for (mask, color) in masks_by_image.get(&i).into_iter().flatten() {
                blend_mask(&mut img, mask, *color)?;
            }
            for (b, color) in boxes_by_image.get(&i).into_iter().flatten() {
                outline_box(&mut img, b, *color);
            }
            Ok(img)
        });
        match drawn {
            Ok(img) => {
                let name = composite_name(i);
                summary.artifacts.push(name.clone());
                composites.push((name, image.id.clone(), img));
            }
            Err(e) => summary.notes.push(format!("image `{}`: {e}", image.id)),
        }
    }
    Integration { composites, summary }
}
