use crate::error::{Error, Result};

/// 8-bit single-channel frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::invalid(
                "frame",
                format!("{} pixels for a {width}x{height} frame", pixels.len()),
            ));
        }
        Ok(GrayFrame {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayFrame {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: u8) {
        self.pixels[y * self.width + x] = value;
    }
}

/// 24-bit interleaved RGB frame, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbFrame {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl RgbFrame {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height * 3 {
            return Err(Error::invalid(
                "frame",
                format!("{} bytes for a {width}x{height} RGB frame", pixels.len()),
            ));
        }
        Ok(RgbFrame {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    /// BT.601 luma, `(77 R + 150 G + 29 B + 128) >> 8`.
    pub fn to_gray(&self) -> GrayFrame {
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| ((77 * p[0] as u32 + 150 * p[1] as u32 + 29 * p[2] as u32 + 128) >> 8) as u8)
            .collect();
        GrayFrame {
            width: self.width,
            height: self.height,
            pixels,
        }
    }
}

impl From<&GrayFrame> for RgbFrame {
    fn from(g: &GrayFrame) -> Self {
        RgbFrame {
            width: g.width,
            height: g.height,
            pixels: g.pixels.iter().flat_map(|&v| [v, v, v]).collect(),
        }
    }
}
