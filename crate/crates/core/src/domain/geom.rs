use serde::{Deserialize, Serialize};

use super::{DomainError, Label};

/// Axis-aligned pixel box. Extents are at least one pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Result<Self, DomainError> {
        if w == 0 || h == 0 {
            return Err(DomainError::InvalidBox(format!(
                "extent {w}x{h} must be at least 1x1"
            )));
        }
        Ok(Self { x, y, w, h })
    }

    pub fn fits_in(&self, width: u32, height: u32) -> bool {
        self.w >= 1
            && self.h >= 1
            && u64::from(self.x) + u64::from(self.w) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.h) <= u64::from(height)
    }

    pub fn contains(&self, px: u32, py: u32) -> bool {
        px >= self.x && py >= self.y && px - self.x < self.w && py - self.y < self.h
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: Label,
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub confidence: f64,
}

impl Detection {
    pub fn new(label: Label, bbox: BBox, confidence: f64) -> Result<Self, DomainError> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(DomainError::InvalidBox(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            label,
            bbox,
            confidence,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_bounds() {
        let b = BBox::new(2, 3, 4, 5).unwrap();
        assert!(b.fits_in(6, 8));
        assert!(!b.fits_in(5, 8));
        assert!(b.contains(2, 3) && b.contains(5, 7));
        assert!(!b.contains(6, 3) && !b.contains(1, 3));
        assert!(BBox::new(0, 0, 0, 1).is_err());
    }

    #[test]
    fn confidence_range() {
        let l = Label::new("dog").unwrap();
        let b = BBox::new(0, 0, 1, 1).unwrap();
        assert!(Detection::new(l.clone(), b, 1.0).is_ok());
        assert!(Detection::new(l, b, 1.5).is_err());
    }
}
