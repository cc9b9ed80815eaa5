//! Binary masks and the geometry needed to compare them.
//!
//! Masks are stored as [`RleMask`]: row-major run lengths that always start
//! with a (possibly empty) run of zeros. [`Bitmap`] is the dense form used
//! for rasterization and resampling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BoundingBox {
    pub fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        Self { x, y, w, h }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    /// Intersection over union of two boxes; 0 when both are degenerate.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let ix = self.right().min(other.right()).saturating_sub(self.x.max(other.x));
        let iy = self.bottom().min(other.bottom()).saturating_sub(self.y.max(other.y));
        let inter = u64::from(ix) * u64::from(iy);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }
}

pub fn bbox_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

/// Dense binary mask, row-major.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Bitmap {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for Bitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bitmap")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("area", &self.area())
            .finish()
    }
}

impl Bitmap {
    pub fn zeros(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::InvalidRle(format!(
                "{} bits for a {width}x{height} bitmap",
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Tight bounds of the set pixels, `None` for an empty mask.
    pub fn bbox(&self) -> Option<BoundingBox> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then(|| BoundingBox::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    pub fn to_rle(&self) -> RleMask {
        RleMask::encode(self)
    }
}

/// Run-length encoded binary mask.
///
/// `counts` alternates zero-runs and one-runs in row-major order, starting
/// with a zero-run that may have length 0. Apart from that leading run no
/// count is zero, so every mask has exactly one encoding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RleMask {
    width: u32,
    height: u32,
    counts: Vec<u32>,
}

impl RleMask {
    pub fn encode(bitmap: &Bitmap) -> Self {
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for &bit in &bitmap.bits {
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
        counts.push(run);
        Self {
            width: bitmap.width,
            height: bitmap.height,
            counts,
        }
    }

    /// Builds a mask from raw counts. Zero-length interior runs are merged
    /// away so the result is canonical.
    pub fn from_counts(width: u32, height: u32, counts: Vec<u32>) -> Result<Self> {
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        let expected = u64::from(width) * u64::from(height);
        if total != expected {
            return Err(Error::InvalidRle(format!(
                "counts sum to {total}, expected {width}x{height} = {expected}"
            )));
        }
        let mut canonical: Vec<u32> = Vec::with_capacity(counts.len().max(1));
        for (i, &c) in counts.iter().enumerate() {
            let is_ones = i % 2 == 1;
            let last_is_ones = canonical.len() % 2 == 0;
            if c == 0 && i > 0 {
                continue;
            }
            if i > 0 && is_ones == last_is_ones {
                // same parity as the previous kept run: extend it
                *canonical.last_mut().expect("non-empty") += c;
            } else {
                canonical.push(c);
            }
        }
        if canonical.is_empty() {
            canonical.push(0);
        }
        Ok(Self {
            width,
            height,
            counts: canonical,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            counts: vec![width * height],
        }
    }

    pub fn decode(&self) -> Bitmap {
        let mut bits = Vec::with_capacity(self.width as usize * self.height as usize);
        for (i, &c) in self.counts.iter().enumerate() {
            bits.extend(std::iter::repeat(i % 2 == 1).take(c as usize));
        }
        Bitmap {
            width: self.width,
            height: self.height,
            bits,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| u64::from(c)).sum()
    }

    /// Half-open `[start, end)` pixel index ranges of the set runs.
    pub fn runs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        let mut pos = 0u64;
        self.counts.iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += u64::from(c);
            (i % 2 == 1 && c > 0).then_some((start, pos))
        })
    }

    pub fn intersection_area(&self, other: &RleMask) -> Result<u64> {
        self.check_dims(other)?;
        let a: Vec<(u64, u64)> = self.runs().collect();
        let b: Vec<(u64, u64)> = other.runs().collect();
        let (mut i, mut j, mut inter) = (0, 0, 0u64);
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if hi > lo {
                inter += hi - lo;
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        Ok(inter)
    }

    pub fn iou(&self, other: &RleMask) -> Result<f64> {
        let inter = self.intersection_area(other)?;
        let union = self.area() + other.area() - inter;
        Ok(if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        })
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        let w = u64::from(self.width);
        let (mut x0, mut y0, mut x1, mut y1) = (u64::MAX, u64::MAX, 0u64, 0u64);
        let mut any = false;
        for (start, end) in self.runs() {
            any = true;
            let last = end - 1;
            let (ry0, ry1) = (start / w, last / w);
            y0 = y0.min(ry0);
            y1 = y1.max(ry1);
            if ry0 == ry1 {
                x0 = x0.min(start % w);
                x1 = x1.max(last % w);
            } else {
                // a run wrapping a row boundary touches both edges
                x0 = 0;
                x1 = w - 1;
            }
        }
        any.then(|| {
            BoundingBox::new(x0 as u32, y0 as u32, (x1 - x0 + 1) as u32, (y1 - y0 + 1) as u32)
        })
    }

    fn check_dims(&self, other: &RleMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                left_w: self.width,
                left_h: self.height,
                right_w: other.width,
                right_h: other.height,
            });
        }
        Ok(())
    }
}

pub fn rle_encode(bitmap: &Bitmap) -> RleMask {
    RleMask::encode(bitmap)
}

pub fn rle_decode(rle: &RleMask) -> Bitmap {
    rle.decode()
}

pub fn mask_area(mask: &RleMask) -> u64 {
    mask.area()
}

/// |T ∩ D| / |T ∪ D|, or 0 when both masks are empty.
pub fn mask_iou(truth: &RleMask, detected: &RleMask) -> Result<f64> {
    truth.iou(detected)
}

pub fn bbox_from_mask(mask: &RleMask) -> Result<BoundingBox> {
    mask.bbox().ok_or(Error::EmptyMask)
}

/// Closed polygon with sub-pixel vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidPolygon(format!(
                "{} vertices, need at least 3",
                vertices.len()
            )));
        }
        if vertices.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::InvalidPolygon("non-finite vertex".into()));
        }
        let poly = Self { vertices };
        if poly.signed_area() == 0.0 {
            return Err(Error::InvalidPolygon("zero enclosed area".into()));
        }
        Ok(poly)
    }

    /// Parses a COCO-style flat `[x0, y0, x1, y1, ...]` ring.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        if coords.len() % 2 != 0 {
            return Err(Error::InvalidPolygon("odd number of coordinates".into()));
        }
        Self::new(coords.chunks_exact(2).map(|c| (c[0], c[1])).collect())
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    /// Shoelace area; positive for counter-clockwise rings in y-up axes.
    pub fn signed_area(&self) -> f64 {
        let n = self.vertices.len();
        let mut acc = 0.0;
        for i in 0..n {
            let (x0, y0) = self.vertices[i];
            let (x1, y1) = self.vertices[(i + 1) % n];
            acc += x0 * y1 - x1 * y0;
        }
        acc / 2.0
    }

    fn edges(&self) -> impl Iterator<Item = ((f64, f64), (f64, f64))> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }
}

/// Scanline even-odd fill sampled at pixel centres, clipped to the frame.
pub fn polygon_to_mask(polygon: &Polygon, width: u32, height: u32) -> Bitmap {
    polygons_to_mask(std::slice::from_ref(polygon), width, height)
}

/// Fills several rings together under the even-odd rule, so nested rings
/// cut holes.
pub fn polygons_to_mask(polygons: &[Polygon], width: u32, height: u32) -> Bitmap {
    let mut bitmap = Bitmap::zeros(width, height);
    let mut crossings: Vec<f64> = Vec::new();
    for row in 0..height {
        let yc = f64::from(row) + 0.5;
        crossings.clear();
        for poly in polygons {
            for ((x0, y0), (x1, y1)) in poly.edges() {
                // half-open in y so shared vertices are counted once
                if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                    crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
                }
            }
        }
        crossings.sort_by(|a, b| a.total_cmp(b));
        for pair in crossings.chunks_exact(2) {
            // pixel i is inside iff xa <= i + 0.5 < xb
            let first = (pair[0] - 0.5).ceil().max(0.0);
            let end = (pair[1] - 0.5).ceil().min(f64::from(width));
            if end <= first {
                continue;
            }
            for col in first as u32..end as u32 {
                let idx = row as usize * width as usize + col as usize;
                bitmap.bits[idx] = !bitmap.bits[idx];
            }
        }
    }
    bitmap
}
