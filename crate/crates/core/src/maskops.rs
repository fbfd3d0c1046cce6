//! Binary-mask post-processing: rectangular morphology, 8-connected
//! component labeling, and area/ROI filtering into boxes.
//!
//! Pixels outside the mask are treated as background by every operator.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};

/// Foreground mask; one byte per pixel holding 0 or 1, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![0; width * height],
        }
    }

    pub fn filled(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            bits: vec![1; width * height],
        }
    }

    /// Nonzero entries of `bits` become 1.
    pub fn from_bits(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::invalid(
                "mask",
                format!("{} bits for a {width}x{height} mask", bits.len()),
            ));
        }
        let bits = bits.into_iter().map(|b| (b != 0) as u8).collect();
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y) as u8);
            }
        }
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [u8] {
        &mut self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn intersects(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).any(|(a, b)| a & b != 0)
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same_dims(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(a, b)| a & b).collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn complement(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| b ^ 1).collect(),
        }
    }

    /// Copy of the `width`×`height` window at `(x0, y0)`.
    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> BinaryMask {
        assert!(x0 + width <= self.width && y0 + height <= self.height);
        let mut bits = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            bits.extend_from_slice(&self.bits[y * self.width + x0..y * self.width + x0 + width]);
        }
        BinaryMask {
            width,
            height,
            bits,
        }
    }

    /// Tight box around the set bits, or `None` when empty.
    pub fn bounding_box(&self) -> Option<BBox> {
        let mut rows = (0..self.height).filter(|&y| self.bits[y * self.width..(y + 1) * self.width].contains(&1));
        let y0 = rows.next()?;
        let y1 = rows.next_back().unwrap_or(y0);
        let (mut x0, mut x1) = (self.width, 0);
        for y in y0..=y1 {
            let row = &self.bits[y * self.width..(y + 1) * self.width];
            if let Some(first) = row.iter().position(|&b| b != 0) {
                x0 = x0.min(first);
                x1 = x1.max(row.iter().rposition(|&b| b != 0).unwrap_or(first));
            }
        }
        Some(BBox::new(x0 as u32, y0 as u32, x1 as u32 + 1, y1 as u32 + 1))
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.bits.iter().zip(&other.bits).all(|(a, b)| a & !b & 1 == 0)
    }

    fn check_same_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width: other.width,
                height: other.height,
            });
        }
        Ok(())
    }
}

/// Centered rectangular kernel with odd sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuringElement {
    pub width: usize,
    pub height: usize,
}

impl Default for StructuringElement {
    fn default() -> Self {
        StructuringElement {
            width: 3,
            height: 3,
        }
    }
}

impl StructuringElement {
    pub fn rect(width: usize, height: usize) -> Result<Self> {
        let se = StructuringElement { width, height };
        se.validate()?;
        Ok(se)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.width % 2 == 0 || self.height == 0 || self.height % 2 == 0 {
            return Err(Error::invalid(
                "structuring_element",
                format!("{}x{} must have odd sides >= 1", self.width, self.height),
            ));
        }
        Ok(())
    }

    pub fn radius_x(&self) -> usize {
        self.width / 2
    }

    pub fn radius_y(&self) -> usize {
        self.height / 2
    }
}

#[derive(Clone, Copy)]
enum Op {
    Erode,
    Dilate,
}

impl Op {
    #[inline]
    fn keep(self, count: usize, full: usize) -> u8 {
        match self {
            Op::Erode => (count == full) as u8,
            Op::Dilate => (count > 0) as u8,
        }
    }
}

// Sliding-window count along each row; window pixels outside the row count as 0.
fn horizontal_pass(src: &BinaryMask, radius: usize, op: Op) -> BinaryMask {
    let (w, h) = (src.width, src.height);
    let full = 2 * radius + 1;
    let mut out = BinaryMask::new(w, h);
    for y in 0..h {
        let row = &src.bits[y * w..(y + 1) * w];
        let dst = &mut out.bits[y * w..(y + 1) * w];
        let mut count: usize = row[..radius.min(w)].iter().map(|&b| b as usize).sum();
        for x in 0..w {
            if x + radius < w {
                count += row[x + radius] as usize;
            }
            if x > radius {
                count -= row[x - radius - 1] as usize;
            }
            dst[x] = op.keep(count, full);
        }
    }
    out
}

fn vertical_pass(src: &BinaryMask, radius: usize, op: Op) -> BinaryMask {
    let (w, h) = (src.width, src.height);
    let full = 2 * radius + 1;
    let mut out = BinaryMask::new(w, h);
    let mut counts = vec![0usize; w];
    for y in 0..radius.min(h) {
        for (c, &b) in counts.iter_mut().zip(&src.bits[y * w..(y + 1) * w]) {
            *c += b as usize;
        }
    }
    for y in 0..h {
        if y + radius < h {
            let add = &src.bits[(y + radius) * w..(y + radius + 1) * w];
            for (c, &b) in counts.iter_mut().zip(add) {
                *c += b as usize;
            }
        }
        if y > radius {
            let sub = &src.bits[(y - radius - 1) * w..(y - radius) * w];
            for (c, &b) in counts.iter_mut().zip(sub) {
                *c -= b as usize;
            }
        }
        let dst = &mut out.bits[y * w..(y + 1) * w];
        for (d, &c) in dst.iter_mut().zip(&counts) {
            *d = op.keep(c, full);
        }
    }
    out
}

fn morph(mask: &BinaryMask, se: &StructuringElement, op: Op) -> BinaryMask {
    let tmp = horizontal_pass(mask, se.radius_x(), op);
    vertical_pass(&tmp, se.radius_y(), op)
}

/// Output bit is 1 iff every pixel under the kernel is 1.
pub fn erode(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    morph(mask, se, Op::Erode)
}

/// Output bit is 1 iff any pixel under the kernel is 1.
pub fn dilate(mask: &BinaryMask, se: &StructuringElement) -> BinaryMask {
    morph(mask, se, Op::Dilate)
}

/// `iterations` erosions followed by as many dilations.
pub fn open(mask: &BinaryMask, se: &StructuringElement, iterations: usize) -> BinaryMask {
    let mut m = mask.clone();
    for _ in 0..iterations {
        m = erode(&m, se);
    }
    for _ in 0..iterations {
        m = dilate(&m, se);
    }
    m
}

/// `iterations` dilations followed by as many erosions.
pub fn close(mask: &BinaryMask, se: &StructuringElement, iterations: usize) -> BinaryMask {
    let mut m = mask.clone();
    for _ in 0..iterations {
        m = dilate(&m, se);
    }
    for _ in 0..iterations {
        m = erode(&m, se);
    }
    m
}

/// One 8-connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// `(x, y)` pixel coordinates in discovery order.
    pub pixels: Vec<(u32, u32)>,
    pub area: usize,
    /// Tight box around `pixels`.
    pub bbox: BBox,
    /// Mean pixel index `(x, y)`.
    pub centroid: (f64, f64),
}

/// Regions ordered by their first pixel in raster order.
pub type LabeledRegions = Vec<Region>;

/// 8-connected component labeling by stack-based flood fill.
pub fn connected_components(mask: &BinaryMask) -> LabeledRegions {
    let (w, h) = (mask.width, mask.height);
    let mut seen = vec![false; w * h];
    let mut regions = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        if mask.bits[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let (mut sx, mut sy) = (0u64, 0u64);

        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x as u32, y as u32));
            x0 = x0.min(x as u32);
            y0 = y0.min(y as u32);
            x1 = x1.max(x as u32);
            y1 = y1.max(y as u32);
            sx += x as u64;
            sy += y as u64;

            let ylo = y.saturating_sub(1);
            let yhi = (y + 1).min(h - 1);
            let xlo = x.saturating_sub(1);
            let xhi = (x + 1).min(w - 1);
            for ny in ylo..=yhi {
                for nx in xlo..=xhi {
                    let j = ny * w + nx;
                    if mask.bits[j] != 0 && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }

        let area = pixels.len();
        regions.push(Region {
            area,
            bbox: BBox::new(x0, y0, x1 + 1, y1 + 1),
            centroid: (sx as f64 / area as f64, sy as f64 / area as f64),
            pixels,
        });
    }
    regions
}

/// A kept region reduced to what the detector reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Blob {
    pub bbox: BBox,
    pub area: usize,
}

/// Pixel containing a region's centroid.
pub fn centroid_pixel(region: &Region) -> (usize, usize) {
    let (cx, cy) = region.centroid;
    ((cx + 0.5).floor() as usize, (cy + 0.5).floor() as usize)
}

/// Keep regions with `area >= min_area` whose centroid pixel is set in `roi`.
pub fn regions_to_detections(regions: &[Region], min_area: f64, roi: &BinaryMask) -> Vec<Blob> {
    regions
        .iter()
        .filter(|r| r.area as f64 >= min_area)
        .filter(|r| {
            let (x, y) = centroid_pixel(r);
            x < roi.width() && y < roi.height() && roi.get(x, y)
        })
        .map(|r| Blob {
            bbox: r.bbox,
            area: r.area,
        })
        .collect()
}
