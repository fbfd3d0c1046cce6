use serde::{Deserialize, Serialize};

/// Axis-aligned box in pixel-edge coordinates: it covers columns
/// `x_min..x_max` and rows `y_min..y_max` (max edges exclusive), so a
/// single pixel at `(x, y)` is `BBox::new(x, y, x + 1, y + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    pub fn is_valid(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }

    pub fn fits_in(&self, width: usize, height: usize) -> bool {
        self.is_valid() && self.x_max as usize <= width && self.y_max as usize <= height
    }

    pub fn intersection_area(&self, other: &BBox) -> u64 {
        let w = self.x_max.min(other.x_max).saturating_sub(self.x_min.max(other.x_min));
        let h = self.y_max.min(other.y_max).saturating_sub(self.y_min.max(other.y_min));
        w as u64 * h as u64
    }
}
