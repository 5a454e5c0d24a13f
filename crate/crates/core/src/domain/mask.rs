use serde::{Deserialize, Serialize};

use super::{BBox, DomainError, Label};

/// Run-length encoded binary mask over a row-major raster.
///
/// Runs alternate between 0-pixels and 1-pixels and always start with the
/// 0-count, which is the only run allowed to be zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawRle")]
pub struct MaskRle {
    width: u32,
    height: u32,
    runs: Vec<u64>,
}

#[derive(Deserialize)]
struct RawRle {
    width: u32,
    height: u32,
    runs: Vec<u64>,
}

impl TryFrom<RawRle> for MaskRle {
    type Error = DomainError;

    fn try_from(raw: RawRle) -> Result<Self, Self::Error> {
        MaskRle::from_runs(raw.width, raw.height, raw.runs)
    }
}

impl MaskRle {
    pub fn from_runs(width: u32, height: u32, runs: Vec<u64>) -> Result<Self, DomainError> {
        let total = u64::from(width) * u64::from(height);
        let sum: u64 = runs.iter().sum();
        if sum != total {
            return Err(DomainError::InvalidMask(format!(
                "runs sum to {sum}, expected {width}x{height} = {total}"
            )));
        }
        if runs.is_empty() && total > 0 {
            return Err(DomainError::InvalidMask("no runs".into()));
        }
        if let Some(i) = runs.iter().skip(1).position(|&r| r == 0) {
            return Err(DomainError::InvalidMask(format!(
                "zero-length run at index {}",
                i + 1
            )));
        }
        Ok(Self {
            width,
            height,
            runs,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        let total = u64::from(width) * u64::from(height);
        Self {
            width,
            height,
            runs: vec![total],
        }
    }

    /// Mask whose 1-pixels are exactly the box, clipped to the raster.
    pub fn from_box(width: u32, height: u32, bbox: &BBox) -> Self {
        let mut bits = vec![0u8; width as usize * height as usize];
        let x_end = (bbox.x.saturating_add(bbox.w)).min(width);
        let y_end = (bbox.y.saturating_add(bbox.h)).min(height);
        for y in bbox.y.min(height)..y_end {
            let row = y as usize * width as usize;
            for x in bbox.x.min(width)..x_end {
                bits[row + x as usize] = 1;
            }
        }
        encode_bits(&bits, width, height)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn runs(&self) -> &[u64] {
        &self.runs
    }

    pub fn decode(&self) -> Vec<u8> {
        let mut bits = Vec::with_capacity(self.width as usize * self.height as usize);
        for (i, &run) in self.runs.iter().enumerate() {
            let value = (i % 2) as u8;
            bits.extend(std::iter::repeat(value).take(run as usize));
        }
        bits
    }

    pub fn popcount(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.popcount() == 0
    }

    pub fn union(&self, other: &MaskRle) -> Result<MaskRle, DomainError> {
        self.combine(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &MaskRle) -> Result<MaskRle, DomainError> {
        self.combine(other, |a, b| a & b)
    }

    fn combine(&self, other: &MaskRle, f: impl Fn(u8, u8) -> u8) -> Result<MaskRle, DomainError> {
        check_dims(self, other)?;
        let a = self.decode();
        let b = other.decode();
        let bits: Vec<u8> = a.iter().zip(&b).map(|(&x, &y)| f(x, y)).collect();
        Ok(encode_bits(&bits, self.width, self.height))
    }

    /// Tight bounding box of the 1-pixels, or `None` for an empty mask.
    pub fn bounding_box(&self) -> Option<BBox> {
        let w = self.width as usize;
        let mut min_x = usize::MAX;
        let mut min_y = usize::MAX;
        let mut max_x = 0;
        let mut max_y = 0;
        for (i, &bit) in self.decode().iter().enumerate() {
            if bit == 1 {
                let (x, y) = (i % w, i / w);
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
            }
        }
        (min_x != usize::MAX).then(|| BBox {
            x: min_x as u32,
            y: min_y as u32,
            w: (max_x - min_x + 1) as u32,
            h: (max_y - min_y + 1) as u32,
        })
    }
}

fn check_dims(a: &MaskRle, b: &MaskRle) -> Result<(), DomainError> {
    if a.width != b.width || a.height != b.height {
        return Err(DomainError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn encode_bits(bits: &[u8], width: u32, height: u32) -> MaskRle {
    let mut runs = Vec::new();
    let mut current = 0u8;
    let mut count = 0u64;
    for &bit in bits {
        let bit = u8::from(bit != 0);
        if bit != current {
            runs.push(count);
            count = 0;
            current = bit;
        }
        count += 1;
    }
    runs.push(count);
    MaskRle {
        width,
        height,
        runs,
    }
}

/// Encodes a row-major 0/1 bitmap. Any non-zero byte counts as a 1-pixel.
pub fn rle_encode(bitmap: &[u8], width: u32, height: u32) -> Result<MaskRle, DomainError> {
    let expected = width as usize * height as usize;
    if bitmap.len() != expected {
        return Err(DomainError::DimensionMismatch(format!(
            "bitmap has {} pixels, expected {width}x{height} = {expected}",
            bitmap.len()
        )));
    }
    if expected == 0 {
        return Ok(MaskRle::empty(width, height));
    }
    Ok(encode_bits(bitmap, width, height))
}

/// Intersection over union of the 1-pixels; 1.0 when both masks are empty.
///
/// Walks both run lists in lockstep without materializing the bitmaps.
pub fn mask_jaccard(a: &MaskRle, b: &MaskRle) -> Result<f64, DomainError> {
    check_dims(a, b)?;
    let mut ia = RunCursor::new(&a.runs);
    let mut ib = RunCursor::new(&b.runs);
    let mut inter = 0u64;
    let mut union = 0u64;
    loop {
        let (Some((va, la)), Some((vb, lb))) = (ia.peek(), ib.peek()) else {
            break;
        };
        let step = la.min(lb);
        if va && vb {
            inter += step;
        }
        if va || vb {
            union += step;
        }
        ia.advance(step);
        ib.advance(step);
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(inter as f64 / union as f64)
}

struct RunCursor<'a> {
    runs: &'a [u64],
    index: usize,
    remaining: u64,
}

impl<'a> RunCursor<'a> {
    fn new(runs: &'a [u64]) -> Self {
        let mut cursor = Self {
            runs,
            index: 0,
            remaining: runs.first().copied().unwrap_or(0),
        };
        cursor.skip_empty();
        cursor
    }

    fn skip_empty(&mut self) {
        while self.remaining == 0 && self.index < self.runs.len() {
            self.index += 1;
            self.remaining = self.runs.get(self.index).copied().unwrap_or(0);
        }
    }

    fn peek(&self) -> Option<(bool, u64)> {
        (self.index < self.runs.len()).then_some((self.index % 2 == 1, self.remaining))
    }

    fn advance(&mut self, n: u64) {
        self.remaining -= n;
        self.skip_empty();
    }
}

/// RGB triple, serialized as `[r, g, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

/// Golden-angle palette: instance `k` gets hue `(137 k) mod 360` at full
/// saturation and value.
pub fn palette_color(k: u64) -> Rgb {
    let hue = (k % 360) * 137 % 360;
    // Full saturation and value; ramps rounded half up in integers so
    // hues landing on .5 are not at the mercy of float error.
    let f = hue % 60;
    let rise = ((255 * f + 30) / 60) as u8;
    let fall = ((255 * (60 - f) + 30) / 60) as u8;
    Rgb(match hue / 60 {
        0 => [255, rise, 0],
        1 => [fall, 255, 0],
        2 => [0, 255, rise],
        3 => [0, fall, 255],
        4 => [rise, 0, 255],
        _ => [255, 0, fall],
    })
}

/// One segmented object instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMask {
    pub label: Label,
    pub instance_id: u32,
    pub mask: MaskRle,
    pub color: Rgb,
}

impl InstanceMask {
    pub fn new(label: Label, instance_id: u32, mask: MaskRle) -> Self {
        Self {
            color: palette_color(u64::from(instance_id)),
            label,
            instance_id,
            mask,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn encode_full_and_empty() {
        assert_eq!(rle_encode(&[1; 8], 4, 2).unwrap().runs(), &[0, 8]);
        assert_eq!(rle_encode(&[0; 8], 4, 2).unwrap().runs(), &[8]);
    }

    #[test]
    fn encode_leading_ones_row() {
        let bits = [1, 1, 0, 0, 0, 0, 0, 0];
        assert_eq!(rle_encode(&bits, 4, 2).unwrap().runs(), &[0, 2, 6]);
    }

    #[test]
    fn encode_rejects_wrong_length() {
        assert!(matches!(
            rle_encode(&[0; 7], 4, 2),
            Err(DomainError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn from_runs_validates() {
        assert!(MaskRle::from_runs(4, 2, vec![0, 8]).is_ok());
        assert!(MaskRle::from_runs(4, 2, vec![0, 7]).is_err());
        assert!(MaskRle::from_runs(4, 2, vec![4, 0, 4]).is_err());
        let json = r#"{"width":2,"height":1,"runs":[1,1]}"#;
        let mask: MaskRle = serde_json::from_str(json).unwrap();
        assert_eq!(serde_json::to_string(&mask).unwrap(), json);
        assert!(serde_json::from_str::<MaskRle>(r#"{"width":2,"height":1,"runs":[3]}"#).is_err());
    }

    #[test]
    fn jaccard_examples() {
        let a = MaskRle::from_box(4, 4, &BBox::new(0, 0, 2, 2).unwrap());
        assert_eq!(mask_jaccard(&a, &a).unwrap(), 1.0);
        let far = MaskRle::from_box(4, 4, &BBox::new(2, 2, 2, 2).unwrap());
        assert_eq!(mask_jaccard(&a, &far).unwrap(), 0.0);
        let inner = MaskRle::from_box(4, 4, &BBox::new(0, 0, 2, 1).unwrap());
        assert_eq!(mask_jaccard(&inner, &a).unwrap(), 0.5);
        let e = MaskRle::empty(4, 4);
        assert_eq!(mask_jaccard(&e, &e).unwrap(), 1.0);
        assert!(mask_jaccard(&e, &MaskRle::empty(4, 3)).is_err());
    }

    #[test]
    fn palette_first_colors() {
        assert_eq!(palette_color(0), Rgb([255, 0, 0]));
        // hue 137: sector 2, x = 255 * (137/60 - 2)
        assert_eq!(palette_color(1), Rgb([0, 255, 72]));
        assert_ne!(palette_color(0), palette_color(1));
    }

    #[test]
    fn bounding_box_of_mask() {
        let b = BBox::new(1, 2, 3, 1).unwrap();
        assert_eq!(MaskRle::from_box(6, 5, &b).bounding_box(), Some(b));
        assert_eq!(MaskRle::empty(6, 5).bounding_box(), None);
    }

    fn bitmap() -> impl Strategy<Value = (Vec<u8>, u32, u32)> {
        (1u32..9, 1u32..9).prop_flat_map(|(w, h)| {
            (
                proptest::collection::vec(0u8..2, (w * h) as usize),
                Just(w),
                Just(h),
            )
        })
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip((bits, w, h) in bitmap()) {
            let mask = rle_encode(&bits, w, h).unwrap();
            prop_assert_eq!(mask.decode(), bits.clone());
            prop_assert_eq!(mask.popcount(), bits.iter().map(|&b| u64::from(b)).sum::<u64>());
            prop_assert!(MaskRle::from_runs(w, h, mask.runs().to_vec()).is_ok());
        }

        #[test]
        fn jaccard_is_symmetric_and_bounded(
            (a, w, h) in bitmap(),
            seed in proptest::collection::vec(0u8..2, 64),
        ) {
            let b: Vec<u8> = (0..a.len()).map(|i| seed[i % seed.len()] ^ a[(i * 7) % a.len()]).collect();
            let ma = rle_encode(&a, w, h).unwrap();
            let mb = rle_encode(&b, w, h).unwrap();
            let ab = mask_jaccard(&ma, &mb).unwrap();
            prop_assert_eq!(ab, mask_jaccard(&mb, &ma).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab == 1.0, a == b);
        }
    }
}
