use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{rle_encode, BBox, DomainError, Label, MaskRle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Rect,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneShape {
    pub label: Label,
    pub kind: ShapeKind,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl SceneShape {
    pub fn bbox(&self) -> BBox {
        BBox {
            x: self.x,
            y: self.y,
            w: self.w,
            h: self.h,
        }
    }

    /// Pixel-center membership test.
    pub fn contains(&self, px: u32, py: u32) -> bool {
        if !self.bbox().contains(px, py) {
            return false;
        }
        match self.kind {
            ShapeKind::Rect => true,
            ShapeKind::Ellipse => {
                let rx = f64::from(self.w) / 2.0;
                let ry = f64::from(self.h) / 2.0;
                let cx = f64::from(self.x) + rx;
                let cy = f64::from(self.y) + ry;
                let dx = (f64::from(px) + 0.5 - cx) / rx;
                let dy = (f64::from(py) + 0.5 - cy) / ry;
                dx * dx + dy * dy <= 1.0
            }
        }
    }
}

/// Synthetic ground-truth scene used by the mock executors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawScene")]
pub struct SceneSpec {
    pub width: u32,
    pub height: u32,
    pub shapes: Vec<SceneShape>,
}

#[derive(Deserialize)]
struct RawScene {
    width: u32,
    height: u32,
    #[serde(default)]
    shapes: Vec<SceneShape>,
}

impl TryFrom<RawScene> for SceneSpec {
    type Error = DomainError;

    fn try_from(raw: RawScene) -> Result<Self, Self::Error> {
        SceneSpec::new(raw.width, raw.height, raw.shapes)
    }
}

impl SceneSpec {
    pub fn new(width: u32, height: u32, shapes: Vec<SceneShape>) -> Result<Self, DomainError> {
        if width == 0 || height == 0 {
            return Err(DomainError::InvalidScene(format!(
                "scene must be at least 1x1, got {width}x{height}"
            )));
        }
        for (i, shape) in shapes.iter().enumerate() {
            if !shape.bbox().fits_in(width, height) {
                return Err(DomainError::InvalidScene(format!(
                    "shape {i} ({}) at {},{} size {}x{} leaves the {width}x{height} canvas",
                    shape.label, shape.x, shape.y, shape.w, shape.h
                )));
            }
        }
        Ok(Self {
            width,
            height,
            shapes,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DomainError> {
        let text = fs::read_to_string(path)
            .map_err(|e| DomainError::InvalidScene(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| DomainError::InvalidScene(format!("{}: {e}", path.display())))
    }

    pub fn shapes_labeled<'a>(&'a self, label: &'a Label) -> impl Iterator<Item = &'a SceneShape> {
        self.shapes.iter().filter(move |s| &s.label == label)
    }

    /// Rasterizes the given shapes, restricted to `clip` when provided.
    pub fn rasterize_shapes<'a>(
        &self,
        shapes: impl IntoIterator<Item = &'a SceneShape>,
        clip: Option<&BBox>,
    ) -> MaskRle {
        let (w, h) = (self.width, self.height);
        let mut bits = vec![0u8; w as usize * h as usize];
        for shape in shapes {
            let b = shape.bbox();
            for py in b.y..b.y + b.h {
                for px in b.x..b.x + b.w {
                    if clip.is_some_and(|c| !c.contains(px, py)) {
                        continue;
                    }
                    if shape.contains(px, py) {
                        bits[py as usize * w as usize + px as usize] = 1;
                    }
                }
            }
        }
        rle_encode(&bits, w, h).expect("bitmap sized to scene")
    }
}

/// Union of every shape carrying `label`; unknown labels give an empty mask.
pub fn rasterize_scene(scene: &SceneSpec, label: &Label) -> MaskRle {
    scene.rasterize_shapes(scene.shapes_labeled(label), None)
}

/// Where an image's pixels come from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageSource {
    /// Binary PPM (P6) or PGM (P5) file.
    Raster(PathBuf),
    /// JSON scene description.
    Scene(PathBuf),
    /// Opaque location handed back by a remote executor.
    Uri(String),
    /// Copy of `parent` produced by a generate or edit step.
    Generated { parent: String, instruction: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub source: ImageSource,
}

impl ImageRef {
    /// Builds a reference from a file path, reading its dimensions.
    /// `.json` files are scenes; anything else must be a PPM/PGM raster.
    pub fn from_path(id: impl Into<String>, path: &Path) -> Result<Self, DomainError> {
        let is_scene = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("json"));
        if is_scene {
            let scene = SceneSpec::load(path)?;
            Ok(Self {
                id: id.into(),
                width: scene.width,
                height: scene.height,
                source: ImageSource::Scene(path.to_path_buf()),
            })
        } else {
            let (width, height) = super::raster::probe_dimensions(path)?;
            Ok(Self {
                id: id.into(),
                width,
                height,
                source: ImageSource::Raster(path.to_path_buf()),
            })
        }
    }

    /// Location string used on the executor wire.
    pub fn uri(&self) -> String {
        match &self.source {
            ImageSource::Raster(p) | ImageSource::Scene(p) => p.display().to_string(),
            ImageSource::Uri(u) => u.clone(),
            ImageSource::Generated { parent, .. } => format!("generated:{parent}"),
        }
    }
}
