//! Numbered raster frames on disk: 8-bit grayscale or 24-bit color,
//! PNG or PNM, read in filename order.

use std::fs;
use std::path::{Path, PathBuf};

use aerotraffic_core::{GrayFrame, RgbFrame, SyntheticScene};
use image::{DynamicImage, ExtendedColorType, ImageFormat};

use crate::error::{CliError, CliResult};

const EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

#[derive(Debug, Clone, PartialEq)]
pub enum Raster {
    Gray(GrayFrame),
    Rgb(RgbFrame),
}

impl Raster {
    pub fn width(&self) -> usize {
        match self {
            Raster::Gray(f) => f.width(),
            Raster::Rgb(f) => f.width(),
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Raster::Gray(f) => f.height(),
            Raster::Rgb(f) => f.height(),
        }
    }

    pub fn to_gray(&self) -> GrayFrame {
        match self {
            Raster::Gray(f) => f.clone(),
            Raster::Rgb(f) => f.to_gray(),
        }
    }

    pub fn into_gray(self) -> GrayFrame {
        match self {
            Raster::Gray(f) => f,
            Raster::Rgb(f) => f.to_gray(),
        }
    }

    pub fn to_rgb(&self) -> RgbFrame {
        match self {
            Raster::Gray(f) => RgbFrame::from(f),
            Raster::Rgb(f) => f.clone(),
        }
    }
}

fn is_frame_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Decode one lossless 8-bit gray or 24-bit color raster.
pub fn read_raster(path: &Path) -> CliResult<Raster> {
    let bad = |message: String| CliError::Image {
        path: path.to_path_buf(),
        message,
    };
    let img = image::ImageReader::open(path)
        .map_err(|e| CliError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| CliError::io(path, e))?
        .decode()
        .map_err(|e| bad(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => GrayFrame::new(w, h, buf.into_raw())
            .map(Raster::Gray)
            .map_err(|e| bad(e.to_string())),
        DynamicImage::ImageRgb8(buf) => RgbFrame::new(w, h, buf.into_raw())
            .map(Raster::Rgb)
            .map_err(|e| bad(e.to_string())),
        other => Err(bad(format!(
            "unsupported pixel layout {:?}; expected 8-bit gray or 24-bit color",
            other.color()
        ))),
    }
}

/// A directory of frames, listed up front and decoded on demand.
#[derive(Debug, Clone)]
pub struct FrameDir {
    files: Vec<PathBuf>,
    width: usize,
    height: usize,
}

/// List the raster files in `dir` in lexicographic order. The first file
/// fixes the frame size; every later read checks against it.
pub fn load_frames(dir: &Path) -> CliResult<FrameDir> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.is_file() && is_frame_file(&path) {
            files.push(path);
        }
    }
    files.sort();
    let first = files.first().ok_or_else(|| CliError::Image {
        path: dir.to_path_buf(),
        message: "no frame files (png, pgm, ppm, pnm) in directory".into(),
    })?;
    let probe = read_raster(first)?;
    Ok(FrameDir {
        width: probe.width(),
        height: probe.height(),
        files,
    })
}

impl FrameDir {
    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn read(&self, index: usize) -> CliResult<Raster> {
        let path = &self.files[index];
        let r = read_raster(path)?;
        if (r.width(), r.height()) != (self.width, self.height) {
            return Err(CliError::Image {
                path: path.clone(),
                message: format!(
                    "frame is {}x{} but the sequence is {}x{}",
                    r.width(),
                    r.height(),
                    self.width,
                    self.height
                ),
            });
        }
        Ok(r)
    }

    pub fn iter(&self) -> impl Iterator<Item = CliResult<Raster>> + '_ {
        (0..self.files.len()).map(move |i| self.read(i))
    }
}

/// Random access to a frame sequence.
pub trait FrameSource {
    fn frame_count(&self) -> usize;
    fn read_frame(&self, index: usize) -> CliResult<Raster>;
}

impl FrameSource for FrameDir {
    fn frame_count(&self) -> usize {
        self.len()
    }

    fn read_frame(&self, index: usize) -> CliResult<Raster> {
        self.read(index)
    }
}

impl FrameSource for aerotraffic_core::SyntheticScene {
    fn frame_count(&self) -> usize {
        SyntheticScene::frame_count(self) as usize
    }

    fn read_frame(&self, index: usize) -> CliResult<Raster> {
        Ok(Raster::Gray(self.render(index as u64)))
    }
}

/// Zero-padded file name for frame `index`.
pub fn frame_file_name(index: u64) -> String {
    format!("{index:06}.png")
}

pub fn write_gray_png(path: &Path, frame: &GrayFrame) -> CliResult<()> {
    image::save_buffer_with_format(
        path,
        frame.pixels(),
        frame.width() as u32,
        frame.height() as u32,
        ExtendedColorType::L8,
        ImageFormat::Png,
    )
    .map_err(|e| CliError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_rgb_png(path: &Path, frame: &RgbFrame) -> CliResult<()> {
    image::save_buffer_with_format(
        path,
        frame.pixels(),
        frame.width() as u32,
        frame.height() as u32,
        ExtendedColorType::Rgb8,
        ImageFormat::Png,
    )
    .map_err(|e| CliError::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Write `frames` as `000000.png, 000001.png, …` into `dir`.
pub fn write_frames(dir: &Path, frames: impl IntoIterator<Item = GrayFrame>) -> CliResult<usize> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut n = 0;
    for (i, f) in frames.into_iter().enumerate() {
        write_gray_png(&dir.join(frame_file_name(i as u64)), &f)?;
        n += 1;
    }
    Ok(n)
}
