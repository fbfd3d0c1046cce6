//! Deterministic synthetic highway scenes with exact ground truth.
//!
//! Vehicles are axis-aligned rectangles translating horizontally at a
//! constant integer speed. A frame is rendered as background, then
//! clutter flicker, then vehicles in list order, then per-pixel Gaussian
//! noise from a stream seeded by `(seed, frame index)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::frame::GrayFrame;
use crate::geometry::{Band, Polygon, RoiSpec, DEFAULT_CUTOFF_FRACTION};
use crate::rng::{mix, XorShift64Star};

/// Rows left between two vehicles when a pair is pulled apart.
pub const DEFAULT_SEPARATION_GAP: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Flat { intensity: u8 },
    /// Blocky value texture: each `cell`×`cell` block is `base` offset by
    /// a seeded value in `[-amplitude, amplitude]`.
    Textured { base: u8, amplitude: u8, cell: u32 },
}

impl Default for Background {
    fn default() -> Self {
        Background::Flat { intensity: 90 }
    }
}

/// A static patch whose intensity jumps by `amplitude` for `duration`
/// frames out of every `period`, starting at `phase`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterRegion {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub amplitude: f64,
    pub period: u64,
    #[serde(default = "default_duration")]
    pub duration: u64,
    #[serde(default)]
    pub phase: u64,
}

fn default_duration() -> u64 {
    3
}

impl ClutterRegion {
    pub fn offset_at(&self, frame: u64) -> f64 {
        if (frame + self.phase) % self.period < self.duration {
            self.amplitude
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandModel {
    pub band: Band,
    /// Standard deviation of per-pixel Gaussian noise.
    pub noise_sigma: f64,
    #[serde(default)]
    pub clutter: Vec<ClutterRegion>,
}

impl BandModel {
    pub fn rgb_like() -> Self {
        BandModel {
            band: Band::Rgb,
            noise_sigma: 2.0,
            clutter: Vec::new(),
        }
    }

    /// Thermal-like noise plus roadside clutter strips for a
    /// `width`×`height` frame. Strips sit in the bottom eighth of the frame.
    pub fn ir_like(width: u32, height: u32) -> Self {
        let strip_h = (height / 40).max(4);
        let y = height - strip_h - 2;
        let strip_w = (width / 8).max(8);
        // bursts land on frames 5..8 of every 50 so the seed frame is quiet
        let clutter = [35.0, 100.0, 35.0, 100.0]
            .iter()
            .enumerate()
            .map(|(i, &amplitude)| ClutterRegion {
                x: (i as u32 * 2 + 1) * width / 9,
                y,
                width: strip_w,
                height: strip_h,
                amplitude,
                period: 50,
                duration: 3,
                phase: 45,
            })
            .collect();
        BandModel {
            band: Band::Ir,
            noise_sigma: 1.0,
            clutter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSpec {
    pub entry_frame: u64,
    pub direction: String,
    /// Left edge at the entry frame.
    pub x: i64,
    /// Top row (lane position).
    pub y: i64,
    /// Signed horizontal speed in px/frame; magnitude at least 1.
    pub speed: i64,
    pub width: u32,
    pub height: u32,
    pub intensity: u8,
    /// Last active frame. Defaults to the last frame the vehicle is fully in view.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_frame: Option<u64>,
}

impl VehicleSpec {
    fn rect_at(&self, frame: u64) -> (i64, i64, i64, i64) {
        let x = self.x + self.speed * (frame as i64 - self.entry_frame as i64);
        (x, self.y, x + self.width as i64, self.y + self.height as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub width: u32,
    pub height: u32,
    pub frame_count: u64,
    pub seed: u64,
    #[serde(default)]
    pub background: Background,
    #[serde(default)]
    pub vehicles: Vec<VehicleSpec>,
    pub band_model: BandModel,
    #[serde(default = "default_cutoff")]
    pub cutoff_fraction: f64,
    #[serde(default)]
    pub direction_polygons: BTreeMap<String, Polygon>,
    /// Frames per second; metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_rate: Option<f64>,
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF_FRACTION
}

/// Knobs for [`SceneConfig::highway`].
#[derive(Debug, Clone, PartialEq)]
pub struct HighwayOptions {
    pub width: u32,
    pub height: u32,
    pub frame_count: u64,
    pub seed: u64,
    pub band: Band,
    /// Upper bound; frames too short for this many lanes get fewer.
    pub lanes_per_direction: u32,
    /// Vehicle footprint in pixels (along road, across road).
    pub vehicle_size: (u32, u32),
    /// Mean frames between entries in one lane.
    pub headway: u64,
    /// Lane speeds cycle through this list (px/frame magnitudes).
    pub speeds: Vec<i64>,
    pub road_intensity: u8,
}

impl Default for HighwayOptions {
    fn default() -> Self {
        HighwayOptions {
            width: 640,
            height: 480,
            frame_count: 750,
            seed: 1,
            band: Band::Rgb,
            lanes_per_direction: 3,
            vehicle_size: (40, 16),
            headway: 120,
            speeds: vec![4, 5, 6],
            road_intensity: 90,
        }
    }
}

/// Footprint `(along, across)` with `along / across = aspect` and the given area.
pub fn vehicle_size_px(area: f64, aspect: f64) -> (u32, u32) {
    let across = (area / aspect).sqrt();
    let along = across * aspect;
    ((along.round() as u32).max(1), (across.round() as u32).max(1))
}

impl SceneConfig {
    /// Two-direction highway: `north` traffic moves left in the upper lanes,
    /// `south` traffic moves right in the lower lanes, below the default
    /// cutoff. Entries are staggered per lane with seeded jitter.
    pub fn highway(opts: &HighwayOptions) -> Self {
        let (w, h) = (opts.width, opts.height);
        let cutoff = (DEFAULT_CUTOFF_FRACTION * h as f64).ceil() as u32;
        let (vl, vh) = opts.vehicle_size;
        let pitch = vh + vh / 2 + 4;
        let visible = h.saturating_sub(cutoff);
        let mid = cutoff + visible / 2;
        // small frames get fewer lanes rather than lanes off the road
        let fit = (visible / 2).saturating_sub(6) / pitch;
        let lanes = opts.lanes_per_direction.min(fit).max(1);

        let mut rng = XorShift64Star::new(mix(&[opts.seed, 0x5ce7e]));
        let mut vehicles = Vec::new();
        for (dir_idx, direction) in ["north", "south"].iter().enumerate() {
            for lane in 0..lanes {
                let top = if dir_idx == 0 {
                    (mid + (pitch - vh) / 2).saturating_sub(6 + (lane + 1) * pitch)
                } else {
                    mid + 6 + lane * pitch + (pitch - vh) / 2
                };
                let speed_mag = opts.speeds[((dir_idx as u32 * lanes + lane) as usize) % opts.speeds.len()];
                let (x, speed) = if dir_idx == 0 {
                    (w as i64 - vl as i64, -speed_mag)
                } else {
                    (0, speed_mag)
                };
                let mut t = rng.below(opts.headway.max(1));
                while t < opts.frame_count {
                    let intensity = if rng.below(2) == 0 {
                        rng.below(11) as u8
                    } else {
                        180 + rng.below(71) as u8
                    };
                    vehicles.push(VehicleSpec {
                        entry_frame: t,
                        direction: direction.to_string(),
                        x,
                        y: top as i64,
                        speed,
                        width: vl,
                        height: vh,
                        intensity,
                        exit_frame: None,
                    });
                    // keep a lane free of overlap: never enter before the previous vehicle moved a length plus gap
                    let min_gap = (2 * vl as i64 / speed_mag) as u64 + 1;
                    let jitter = rng.below(opts.headway / 2 + 1);
                    t += (opts.headway * 3 / 4 + jitter).max(min_gap);
                }
            }
        }

        let mut direction_polygons = BTreeMap::new();
        direction_polygons.insert(
            "north".to_string(),
            Polygon::rect(0.0, 0.0, w as f64, mid as f64),
        );
        direction_polygons.insert(
            "south".to_string(),
            Polygon::rect(0.0, mid as f64, w as f64, h as f64),
        );

        let band_model = match opts.band {
            Band::Rgb => BandModel::rgb_like(),
            Band::Ir => BandModel::ir_like(w, h),
        };

        SceneConfig {
            width: w,
            height: h,
            frame_count: opts.frame_count,
            seed: opts.seed,
            background: Background::Flat {
                intensity: opts.road_intensity,
            },
            vehicles,
            band_model,
            cutoff_fraction: DEFAULT_CUTOFF_FRACTION,
            direction_polygons,
            frame_rate: None,
        }
    }

    pub fn roi(&self) -> RoiSpec {
        RoiSpec {
            cutoff_fraction: self.cutoff_fraction,
            direction_polygons: self.direction_polygons.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("scene", "width and height must be > 0"));
        }
        if self.frame_count == 0 {
            return Err(Error::invalid("frame_count", "must be > 0"));
        }
        if !(self.band_model.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma", "must be >= 0"));
        }
        self.roi().validate()?;
        for (i, c) in self.band_model.clutter.iter().enumerate() {
            if c.period == 0 {
                return Err(Error::invalid(format!("clutter[{i}].period"), "must be > 0"));
            }
            if c.x + c.width > self.width || c.y + c.height > self.height {
                return Err(Error::invalid(format!("clutter[{i}]"), "outside the frame"));
            }
        }
        if let Background::Textured { cell, .. } = self.background {
            if cell == 0 {
                return Err(Error::invalid("background.cell", "must be > 0"));
            }
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.speed.abs() < 1 {
                return Err(Error::invalid(
                    format!("vehicles[{i}].speed"),
                    "magnitude must be >= 1 px/frame",
                ));
            }
            if v.width == 0 || v.height == 0 {
                return Err(Error::invalid(format!("vehicles[{i}]"), "empty footprint"));
            }
            if !self.direction_polygons.is_empty() && !self.direction_polygons.contains_key(&v.direction) {
                return Err(Error::UnknownDirection(v.direction.clone()));
            }
            if let Some(exit) = v.exit_frame {
                if exit < v.entry_frame {
                    return Err(Error::invalid(
                        format!("vehicles[{i}].exit_frame"),
                        "before entry_frame",
                    ));
                }
            }
        }
        Ok(())
    }

    fn in_bounds(&self, rect: (i64, i64, i64, i64)) -> bool {
        rect.0 >= 0 && rect.1 >= 0 && rect.2 <= self.width as i64 && rect.3 <= self.height as i64
    }

    /// Inclusive active frame range of vehicle `i`, or `None` if it enters
    /// after the last frame.
    fn active_range(&self, i: usize) -> Result<Option<(u64, u64)>> {
        let v = &self.vehicles[i];
        if v.entry_frame >= self.frame_count {
            return Ok(None);
        }
        let last_frame = self.frame_count - 1;
        let end = match v.exit_frame {
            Some(exit) => exit.min(last_frame),
            None => {
                if !self.in_bounds(v.rect_at(v.entry_frame)) {
                    return Err(Error::VehicleOutOfBounds {
                        index: i,
                        frame: v.entry_frame,
                    });
                }
                // furthest frame still fully in view
                let span = if v.speed > 0 {
                    (self.width as i64 - v.width as i64 - v.x) / v.speed
                } else {
                    v.x / -v.speed
                };
                (v.entry_frame + span.max(0) as u64).min(last_frame)
            }
        };
        for f in [v.entry_frame, end] {
            if !self.in_bounds(v.rect_at(f)) {
                return Err(Error::VehicleOutOfBounds { index: i, frame: f });
            }
        }
        Ok(Some((v.entry_frame, end)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub direction: String,
    pub bbox: BBox,
    pub vehicle_id: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthFrame {
    pub frame_index: u64,
    pub boxes: Vec<GroundTruthBox>,
}

/// Active vehicle rectangles for every frame, indexed by frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GroundTruthLog {
    pub frames: Vec<GroundTruthFrame>,
}

impl GroundTruthLog {
    pub fn frame(&self, index: u64) -> Option<&GroundTruthFrame> {
        // frames are dense from 0 when produced by the generator
        match self.frames.get(index as usize) {
            Some(f) if f.frame_index == index => Some(f),
            _ => self.frames.iter().find(|f| f.frame_index == index),
        }
    }

    pub fn boxes_for(&self, index: u64, direction: &str) -> Vec<BBox> {
        self.frame(index)
            .map(|f| {
                f.boxes
                    .iter()
                    .filter(|b| b.direction == direction)
                    .map(|b| b.bbox)
                    .collect()
            })
            .unwrap_or_default()
    }
}

/// A validated scene ready to render.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    config: SceneConfig,
    active: Vec<Option<(u64, u64)>>,
    background: Vec<f64>,
    pub ground_truth: GroundTruthLog,
    pub roi: RoiSpec,
}

/// Validate `config` and precompute background and ground truth.
pub fn generate(config: &SceneConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let active = (0..config.vehicles.len())
        .map(|i| config.active_range(i))
        .collect::<Result<Vec<_>>>()?;

    let mut frames: Vec<GroundTruthFrame> = (0..config.frame_count)
        .map(|frame_index| GroundTruthFrame {
            frame_index,
            boxes: Vec::new(),
        })
        .collect();
    for (id, (v, range)) in config.vehicles.iter().zip(&active).enumerate() {
        let Some((start, end)) = *range else { continue };
        for f in start..=end {
            let (x0, y0, x1, y1) = v.rect_at(f);
            frames[f as usize].boxes.push(GroundTruthBox {
                direction: v.direction.clone(),
                bbox: BBox::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32),
                vehicle_id: id,
            });
        }
    }

    Ok(SyntheticScene {
        background: render_background(config),
        config: config.clone(),
        active,
        ground_truth: GroundTruthLog { frames },
        roi: config.roi(),
    })
}

fn render_background(config: &SceneConfig) -> Vec<f64> {
    let (w, h) = (config.width as usize, config.height as usize);
    match config.background {
        Background::Flat { intensity } => vec![intensity as f64; w * h],
        Background::Textured {
            base,
            amplitude,
            cell,
        } => {
            let mut out = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    let cx = (x / cell as usize) as u64;
                    let cy = (y / cell as usize) as u64;
                    let mut r = XorShift64Star::new(mix(&[config.seed, 0x7e47, cx, cy]));
                    let offset = (r.next_f64() * 2.0 - 1.0) * amplitude as f64;
                    out.push(base as f64 + offset.round());
                }
            }
            out
        }
    }
}

impl SyntheticScene {
    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn frame_count(&self) -> u64 {
        self.config.frame_count
    }

    /// Render frame `index`.
    pub fn render(&self, index: u64) -> GrayFrame {
        let c = &self.config;
        let (w, h) = (c.width as usize, c.height as usize);
        let mut canvas = self.background.clone();

        for region in &c.band_model.clutter {
            let offset = region.offset_at(index);
            if offset == 0.0 {
                continue;
            }
            for y in region.y as usize..(region.y + region.height) as usize {
                for v in &mut canvas[y * w + region.x as usize..y * w + (region.x + region.width) as usize] {
                    *v += offset;
                }
            }
        }

        for (v, range) in c.vehicles.iter().zip(&self.active) {
            match range {
                Some((s, e)) if (*s..=*e).contains(&index) => {}
                _ => continue,
            }
            let (x0, y0, x1, y1) = v.rect_at(index);
            for y in y0 as usize..y1 as usize {
                canvas[y * w + x0 as usize..y * w + x1 as usize].fill(v.intensity as f64);
            }
        }

        let sigma = c.band_model.noise_sigma;
        let mut pixels = vec![0u8; w * h];
        if sigma > 0.0 {
            // one noise stream per row so any row can be regenerated alone
            pixels
                .chunks_mut(w)
                .zip(canvas.chunks(w))
                .enumerate()
                .for_each(|(y, (out, row))| {
                    let mut rng = XorShift64Star::new(mix(&[c.seed, NOISE_STREAM, index, y as u64]));
                    for (o, &v) in out.iter_mut().zip(row) {
                        *o = quantize(v + sigma * rng.normal());
                    }
                });
        } else {
            for (o, &v) in pixels.iter_mut().zip(&canvas) {
                *o = quantize(v);
            }
        }
        debug_assert_eq!(pixels.len(), w * h);
        GrayFrame::new(w, h, pixels).expect("canvas matches frame size")
    }

    pub fn frames(&self) -> impl Iterator<Item = GrayFrame> + '_ {
        (0..self.frame_count()).map(move |i| self.render(i))
    }
}

// stream tag for the noise generator
const NOISE_STREAM: u64 = 0x4015e;

fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Place the first two same-direction vehicles side by side so their
/// rectangles share `overlap_fraction` of their height. The second
/// vehicle copies the first one's timing, speed and footprint and is drawn
/// over it. Zero overlap leaves [`DEFAULT_SEPARATION_GAP`] rows between them.
pub fn occlusion_scene(base: &SceneConfig, overlap_fraction: f64) -> Result<SceneConfig> {
    if !(0.0..1.0).contains(&overlap_fraction) {
        return Err(Error::invalid(
            "overlap_fraction",
            format!("{overlap_fraction} is outside [0, 1)"),
        ));
    }
    let (a, b) = first_pair(base)?;
    let mut scene = base.clone();
    let lead = scene.vehicles[a].clone();
    let overlap_rows = (overlap_fraction * lead.height as f64).round() as i64;
    let y = if overlap_rows > 0 {
        lead.y + lead.height as i64 - overlap_rows
    } else {
        lead.y + lead.height as i64 + DEFAULT_SEPARATION_GAP as i64
    };
    scene.vehicles[b] = VehicleSpec { y, ..lead };
    Ok(scene)
}

/// Move the second vehicle of the occluded pair so `gap` background rows
/// separate it from the first, as a steeper view would.
pub fn separate_pair(scene: &SceneConfig, gap: u32) -> Result<SceneConfig> {
    let (a, b) = first_pair(scene)?;
    let mut out = scene.clone();
    let lead = &scene.vehicles[a];
    out.vehicles[b].y = lead.y + lead.height as i64 + gap as i64;
    Ok(out)
}

fn first_pair(scene: &SceneConfig) -> Result<(usize, usize)> {
    for (i, v) in scene.vehicles.iter().enumerate() {
        if let Some(j) = scene.vehicles[i + 1..]
            .iter()
            .position(|o| o.direction == v.direction)
        {
            return Ok((i, i + 1 + j));
        }
    }
    Err(Error::invalid(
        "vehicles",
        "need at least two vehicles in one direction",
    ))
}
