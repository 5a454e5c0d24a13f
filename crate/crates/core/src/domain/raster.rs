//! PPM/PGM raster I/O and scene rendering.

use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};

use super::{DomainError, SceneSpec};

pub const SCENE_BACKGROUND: [u8; 3] = [235, 235, 235];
pub const SCENE_SHAPE: [u8; 3] = [128, 128, 128];

fn image_err(path: &Path, e: impl std::fmt::Display) -> DomainError {
    DomainError::Image(format!("{}: {e}", path.display()))
}

fn reader(path: &Path) -> Result<ImageReader<std::io::BufReader<std::fs::File>>, DomainError> {
    let mut reader = ImageReader::open(path).map_err(|e| image_err(path, e))?;
    reader.set_format(ImageFormat::Pnm);
    Ok(reader)
}

pub fn probe_dimensions(path: &Path) -> Result<(u32, u32), DomainError> {
    reader(path)?
        .into_dimensions()
        .map_err(|e| image_err(path, e))
}

/// Loads a binary PPM (P6) or PGM (P5); grayscale is widened to RGB.
pub fn load_raster(path: &Path) -> Result<RgbImage, DomainError> {
    let img = reader(path)?.decode().map_err(|e| image_err(path, e))?;
    Ok(img.to_rgb8())
}

/// Flat rendering of a scene: light background, shapes in mid gray.
pub fn render_scene(scene: &SceneSpec) -> RgbImage {
    let mut img = RgbImage::from_pixel(scene.width, scene.height, image::Rgb(SCENE_BACKGROUND));
    for shape in &scene.shapes {
        let b = shape.bbox();
        for py in b.y..b.y + b.h {
            for px in b.x..b.x + b.w {
                if shape.contains(px, py) {
                    img.put_pixel(px, py, image::Rgb(SCENE_SHAPE));
                }
            }
        }
    }
    img
}

/// Binary PPM (P6) bytes with a `P6\n{w} {h}\n255\n` header.
pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.as_raw());
    out
}

pub fn decode_ppm(bytes: &[u8]) -> Result<RgbImage, DomainError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm)
        .map_err(|e| DomainError::Image(e.to_string()))?;
    Ok(img.to_rgb8())
}
