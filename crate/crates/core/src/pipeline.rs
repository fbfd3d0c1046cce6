//! Frame-by-frame detection: background model → per-direction ROI →
//! opening → closing → connected components → area/ROI filter → boxes.

use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bbox::BBox;
use crate::bgmodel::{MixtureModel, MixtureParams};
use crate::error::{Error, Result};
use crate::frame::{GrayFrame, RgbFrame};
use crate::geometry::{build_roi_mask, expected_vehicle_area_px, Band, RoiSpec, ScenarioGeometry};
use crate::maskops::{
    close, connected_components, open, regions_to_detections, BinaryMask, StructuringElement,
};

/// `min_area = auto` resolves to this fraction of the expected vehicle area.
pub const AUTO_MIN_AREA_FRACTION: f64 = 0.25;

/// Contour-area threshold: a fixed pixel count or derived from geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinArea {
    Fixed(f64),
    Auto,
}

impl Serialize for MinArea {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MinArea::Fixed(v) => s.serialize_f64(*v),
            MinArea::Auto => s.serialize_str("auto"),
        }
    }
}

impl<'de> Deserialize<'de> for MinArea {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(MinArea::Fixed(v as f64)),
            Repr::Num(v) => Ok(MinArea::Fixed(v)),
            Repr::Text(t) if t == "auto" => Ok(MinArea::Auto),
            Repr::Text(t) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mixture: MixtureParams,
    pub se: StructuringElement,
    pub open_iterations: usize,
    pub close_iterations: usize,
    pub min_area: MinArea,
    pub roi: RoiSpec,
    pub directions: Vec<String>,
    pub band: Band,
    /// Needed when `min_area` is `Auto`.
    pub geometry: Option<ScenarioGeometry>,
    pub focal_length_px: Option<f64>,
    pub vehicle_length_ft: f64,
    pub vehicle_width_ft: f64,
    /// Model RGB input with three channels instead of converting to luma.
    pub color_mode: bool,
    /// Split the background update across the rayon pool.
    pub parallel: bool,
}

impl PipelineConfig {
    /// Defaults for `band`, detecting in every direction of `roi`.
    pub fn new(roi: RoiSpec, band: Band) -> Self {
        let directions = roi.direction_polygons.keys().cloned().collect();
        PipelineConfig {
            mixture: MixtureParams::for_band(band),
            se: StructuringElement::default(),
            open_iterations: 1,
            close_iterations: 1,
            min_area: MinArea::Fixed(50.0),
            roi,
            directions,
            band,
            geometry: None,
            focal_length_px: None,
            vehicle_length_ft: 15.0,
            vehicle_width_ft: 6.0,
            color_mode: false,
            parallel: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mixture.validate()?;
        self.se.validate()?;
        self.roi.validate()?;
        if self.directions.is_empty() {
            return Err(Error::Empty("directions"));
        }
        for d in &self.directions {
            if !self.roi.direction_polygons.contains_key(d) {
                return Err(Error::UnknownDirection(d.clone()));
            }
        }
        if self.open_iterations == 0 || self.close_iterations == 0 {
            return Err(Error::invalid("iterations", "must be >= 1"));
        }
        self.resolved_min_area()?;
        Ok(())
    }

    pub fn resolved_min_area(&self) -> Result<f64> {
        match self.min_area {
            MinArea::Fixed(v) if v >= 0.0 => Ok(v),
            MinArea::Fixed(v) => Err(Error::invalid("min_area", format!("{v} is negative"))),
            MinArea::Auto => {
                let geom = self.geometry.as_ref().ok_or_else(|| {
                    Error::invalid("min_area", "\"auto\" needs a scenario geometry")
                })?;
                let focal = self.focal_length_px.ok_or_else(|| {
                    Error::invalid("min_area", "\"auto\" needs focal_length_px")
                })?;
                let area = expected_vehicle_area_px(
                    geom,
                    focal,
                    self.vehicle_length_ft,
                    self.vehicle_width_ft,
                )?;
                Ok(AUTO_MIN_AREA_FRACTION * area)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u64,
    pub direction: String,
    pub bbox: BBox,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub detections: Vec<Detection>,
}

impl FrameDetections {
    pub fn boxes_for(&self, direction: &str) -> Vec<BBox> {
        self.detections
            .iter()
            .filter(|d| d.direction == direction)
            .map(|d| d.bbox)
            .collect()
    }
}

/// Detections for every processed frame, in frame order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionLog {
    pub config: PipelineConfig,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<FrameDetections>,
}

impl DetectionLog {
    pub fn frame(&self, index: u64) -> Option<&FrameDetections> {
        match self.frames.get(index as usize) {
            Some(f) if f.frame_index == index => Some(f),
            _ => self.frames.iter().find(|f| f.frame_index == index),
        }
    }

    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }
}

/// A direction's ROI cropped to its bounding box plus a margin wide
/// enough that morphology inside the window matches the full frame.
#[derive(Debug, Clone)]
struct DirectionWindow {
    label: String,
    x0: usize,
    y0: usize,
    roi: BinaryMask,
}

impl DirectionWindow {
    fn new(label: &str, roi: &BinaryMask, cfg: &PipelineConfig) -> Self {
        let Some(b) = roi.bounding_box() else {
            return DirectionWindow {
                label: label.to_string(),
                x0: 0,
                y0: 0,
                roi: BinaryMask::new(0, 0),
            };
        };
        // opening stays inside the roi box; closing grows it by
        // close_iterations radii before eroding back
        let passes = cfg.open_iterations + cfg.close_iterations + 1;
        let mx = cfg.se.radius_x() * passes;
        let my = cfg.se.radius_y() * passes;
        let x0 = (b.x_min as usize).saturating_sub(mx);
        let y0 = (b.y_min as usize).saturating_sub(my);
        let x1 = (b.x_max as usize + mx).min(roi.width());
        let y1 = (b.y_max as usize + my).min(roi.height());
        DirectionWindow {
            label: label.to_string(),
            x0,
            y0,
            roi: roi.crop(x0, y0, x1 - x0, y1 - y0),
        }
    }
}

/// Stateful detector for one frame sequence.
#[derive(Debug)]
pub struct Pipeline {
    config: PipelineConfig,
    min_area: f64,
    model: Option<MixtureModel>,
    windows: Vec<DirectionWindow>,
    next_index: u64,
}

enum Input<'a> {
    Gray(&'a GrayFrame),
    Rgb(&'a RgbFrame),
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let min_area = config.resolved_min_area()?;
        Ok(Pipeline {
            config,
            min_area,
            model: None,
            windows: Vec::new(),
            next_index: 0,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn min_area(&self) -> f64 {
        self.min_area
    }

    pub fn model(&self) -> Option<&MixtureModel> {
        self.model.as_ref()
    }

    pub fn frames_processed(&self) -> u64 {
        self.next_index
    }

    /// Frame dimensions, once the first frame has been seen.
    pub fn dims(&self) -> Option<(usize, usize)> {
        self.model.as_ref().map(|m| (m.width(), m.height()))
    }

    pub fn process_frame(&mut self, frame: &GrayFrame) -> Result<FrameDetections> {
        let t = self.config.mixture.classify_threshold_sq;
        Ok(self.process(Input::Gray(frame), &[t])?.remove(0))
    }

    /// Color input: luma unless `color_mode` is set.
    pub fn process_rgb_frame(&mut self, frame: &RgbFrame) -> Result<FrameDetections> {
        let t = self.config.mixture.classify_threshold_sq;
        if self.config.color_mode {
            Ok(self.process(Input::Rgb(frame), &[t])?.remove(0))
        } else {
            self.process_frame(&frame.to_gray())
        }
    }

    /// Update the model with `frame` once, then classify it against the
    /// same frozen state at each of `thresholds`. The model's own
    /// threshold only affects the returned sets through its entry here.
    pub fn process_frame_sweep(
        &mut self,
        frame: &GrayFrame,
        thresholds: &[f64],
    ) -> Result<Vec<FrameDetections>> {
        if let Some(t) = thresholds.iter().find(|t| !(**t > 0.0)) {
            return Err(Error::invalid("classify_threshold_sq", format!("{t} must be > 0")));
        }
        self.process(Input::Gray(frame), thresholds)
    }

    fn process(&mut self, input: Input<'_>, thresholds: &[f64]) -> Result<Vec<FrameDetections>> {
        let (w, h) = match input {
            Input::Gray(f) => (f.width(), f.height()),
            Input::Rgb(f) => (f.width(), f.height()),
        };
        let masks: Vec<BinaryMask> = match self.model.as_mut() {
            None => {
                let model = match input {
                    Input::Gray(f) => MixtureModel::new(self.config.mixture, f)?,
                    Input::Rgb(f) => MixtureModel::new_rgb(self.config.mixture, f)?,
                };
                self.config.roi.check_disjoint(w, h)?;
                self.windows = self
                    .config
                    .directions
                    .iter()
                    .map(|d| {
                        let roi = build_roi_mask(w, h, &self.config.roi, d)?;
                        Ok(DirectionWindow::new(d, &roi, &self.config))
                    })
                    .collect::<Result<_>>()?;
                let masks = classify_all(&model, &input, thresholds)?;
                self.model = Some(model);
                masks
            }
            Some(model) => {
                if (model.width(), model.height()) != (w, h) {
                    return Err(Error::DimensionMismatch {
                        expected_width: model.width(),
                        expected_height: model.height(),
                        width: w,
                        height: h,
                    });
                }
                let own = self.config.mixture.classify_threshold_sq;
                let updated = match input {
                    Input::Gray(f) if self.config.parallel => model.apply_parallel(f)?,
                    Input::Gray(f) => model.apply(f)?,
                    Input::Rgb(f) => model.apply_rgb(f)?,
                };
                let mut masks = Vec::with_capacity(thresholds.len());
                for &t in thresholds {
                    if t == own {
                        masks.push(updated.clone());
                    } else {
                        masks.push(classify_one(model, &input, t)?);
                    }
                }
                masks
            }
        };

        let frame_index = self.next_index;
        self.next_index += 1;
        Ok(masks
            .iter()
            .map(|m| FrameDetections {
                frame_index,
                detections: self.detect_from_mask(frame_index, m),
            })
            .collect())
    }

    /// Post-segmentation stages for one foreground mask.
    pub fn detect_from_mask(&self, frame_index: u64, mask: &BinaryMask) -> Vec<Detection> {
        let cfg = &self.config;
        let mut out = Vec::new();
        for win in &self.windows {
            let (ww, wh) = (win.roi.width(), win.roi.height());
            if ww == 0 || wh == 0 {
                continue;
            }
            let masked = mask
                .crop(win.x0, win.y0, ww, wh)
                .and(&win.roi)
                .expect("window sizes match");
            let opened = open(&masked, &cfg.se, cfg.open_iterations);
            let closed = close(&opened, &cfg.se, cfg.close_iterations);
            let regions = connected_components(&closed);
            let (dx, dy) = (win.x0 as u32, win.y0 as u32);
            for blob in regions_to_detections(&regions, self.min_area, &win.roi) {
                let b = blob.bbox;
                out.push(Detection {
                    frame_index,
                    direction: win.label.clone(),
                    bbox: BBox::new(b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy),
                    area: blob.area,
                });
            }
        }
        out
    }
}

fn classify_one(model: &MixtureModel, input: &Input<'_>, t: f64) -> Result<BinaryMask> {
    match input {
        Input::Gray(f) => model.classify(f, t),
        Input::Rgb(f) => model.classify_rgb(f, t),
    }
}

fn classify_all(model: &MixtureModel, input: &Input<'_>, thresholds: &[f64]) -> Result<Vec<BinaryMask>> {
    thresholds.iter().map(|&t| classify_one(model, input, t)).collect()
}

/// Run a whole sequence. The model is seeded from the first frame and
/// updated on every later one; detections are logged for all frames.
pub fn run_sequence<I>(config: PipelineConfig, frames: I) -> Result<DetectionLog>
where
    I: IntoIterator<Item = GrayFrame>,
{
    let mut pipeline = Pipeline::new(config)?;
    let mut log_frames = Vec::new();
    for frame in frames {
        log_frames.push(pipeline.process_frame(&frame)?);
    }
    finish(pipeline, log_frames)
}

/// Wrap processed frames into a log; errors if none were processed.
pub fn finish(pipeline: Pipeline, frames: Vec<FrameDetections>) -> Result<DetectionLog> {
    let (width, height) = pipeline.dims().ok_or(Error::Empty("frame sequence"))?;
    Ok(DetectionLog {
        config: pipeline.config,
        width,
        height,
        frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Throughput {
    pub frames: usize,
    pub seconds: f64,
    pub frames_per_second: f64,
}

/// Time `process_frame` over `frames`; the seeding frame is excluded.
pub fn measure_throughput(config: PipelineConfig, frames: &[GrayFrame]) -> Result<Throughput> {
    let (first, rest) = frames.split_first().ok_or(Error::Empty("frame sequence"))?;
    let mut pipeline = Pipeline::new(config)?;
    pipeline.process_frame(first)?;
    let start = Instant::now();
    for f in rest {
        std::hint::black_box(pipeline.process_frame(f)?);
    }
    let seconds = start.elapsed().as_secs_f64();
    Ok(Throughput {
        frames: rest.len(),
        seconds,
        frames_per_second: rest.len() as f64 / seconds.max(1e-12),
    })
}

/// Reference for the windowed path: the same stages over the full frame.
pub fn detect_full_frame(
    config: &PipelineConfig,
    frame_index: u64,
    mask: &BinaryMask,
) -> Result<Vec<Detection>> {
    let min_area = config.resolved_min_area()?;
    let mut out = Vec::new();
    for d in &config.directions {
        let roi = build_roi_mask(mask.width(), mask.height(), &config.roi, d)?;
        let masked = mask.and(&roi)?;
        let opened = open(&masked, &config.se, config.open_iterations);
        let closed = close(&opened, &config.se, config.close_iterations);
        for blob in regions_to_detections(&connected_components(&closed), min_area, &roi) {
            out.push(Detection {
                frame_index,
                direction: d.clone(),
                bbox: blob.bbox,
                area: blob.area,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Polygon;
    use proptest::prelude::*;

    fn two_way_roi(w: f64, h: f64, cutoff: f64) -> RoiSpec {
        let mut roi = RoiSpec {
            cutoff_fraction: cutoff,
            ..Default::default()
        };
        roi.direction_polygons
            .insert("north".into(), Polygon::rect(0.0, 0.0, w, h / 2.0 + 20.0));
        roi.direction_polygons
            .insert("south".into(), Polygon::rect(0.0, h / 2.0 + 20.0, w, h));
        roi
    }

    fn with_block(base: &GrayFrame, x: usize, y: usize, bw: usize, bh: usize) -> GrayFrame {
        let mut f = base.clone();
        for yy in y..y + bh {
            for xx in x..x + bw {
                f.set(xx, yy, 220);
            }
        }
        f
    }

    fn config(cutoff: f64) -> PipelineConfig {
        let mut c = PipelineConfig::new(two_way_roi(160.0, 120.0, cutoff), Band::Rgb);
        c.min_area = MinArea::Fixed(50.0);
        c
    }

    #[test]
    fn static_scene_has_no_detections() {
        let bg = GrayFrame::filled(160, 120, 80);
        let log = run_sequence(config(0.4), std::iter::repeat(bg).take(50)).unwrap();
        assert_eq!(log.frames.len(), 50);
        assert_eq!(log.detection_count(), 0);
        assert!(log.frames.windows(2).all(|p| p[0].frame_index + 1 == p[1].frame_index));
    }

    #[test]
    fn block_in_south_only() {
        let bg = GrayFrame::filled(160, 120, 80);
        let mut p = Pipeline::new(config(0.4)).unwrap();
        for _ in 0..30 {
            p.process_frame(&bg).unwrap();
        }
        let out = p.process_frame(&with_block(&bg, 40, 95, 20, 10)).unwrap();
        assert_eq!(out.detections.len(), 1);
        let d = &out.detections[0];
        assert_eq!(d.direction, "south");
        assert_eq!(d.bbox, BBox::new(40, 95, 60, 105));
        assert_eq!(d.frame_index, 30);
    }

    #[test]
    fn block_above_cutoff_ignored() {
        let bg = GrayFrame::filled(160, 120, 80);
        let mut p = Pipeline::new(config(0.4)).unwrap();
        p.process_frame(&bg).unwrap();
        // rows 10..20 lie above ceil(0.4 * 120) = 48
        let out = p.process_frame(&with_block(&bg, 40, 10, 20, 10)).unwrap();
        assert!(out.detections.is_empty());
    }

    #[test]
    fn dimension_change_rejected() {
        let mut p = Pipeline::new(config(0.4)).unwrap();
        p.process_frame(&GrayFrame::filled(160, 120, 0)).unwrap();
        assert!(matches!(
            p.process_frame(&GrayFrame::filled(160, 121, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_sequence_rejected() {
        assert_eq!(
            run_sequence(config(0.4), std::iter::empty()).unwrap_err(),
            Error::Empty("frame sequence")
        );
    }

    #[test]
    fn config_validation() {
        let mut c = config(0.4);
        c.directions = vec!["east".into()];
        assert_eq!(c.validate().unwrap_err(), Error::UnknownDirection("east".into()));
        let mut c = config(0.4);
        c.directions.clear();
        assert!(c.validate().is_err());
        let mut c = config(0.4);
        c.min_area = MinArea::Auto;
        assert!(c.validate().is_err());
        c.geometry = Some(ScenarioGeometry::new(300.0, 100.0, 90.0, 80.0).unwrap());
        c.focal_length_px = Some(1000.0);
        let area = c.resolved_min_area().unwrap();
        assert!((area - 225.0).abs() < 1e-6, "{area}");
    }

    #[test]
    fn min_area_serde() {
        let auto: MinArea = serde_json_like("\"auto\"");
        assert_eq!(auto, MinArea::Auto);
    }

    // tiny helper so the core crate does not need serde_json
    fn serde_json_like(text: &str) -> MinArea {
        use serde::de::value::{Error as DeError, StrDeserializer};
        use serde::de::IntoDeserializer;
        let s = text.trim_matches('"');
        let d: StrDeserializer<'_, DeError> = s.into_deserializer();
        MinArea::deserialize(d).unwrap()
    }

    #[test]
    fn sweep_matches_single_threshold_runs() {
        let bg = GrayFrame::filled(160, 120, 80);
        let frames: Vec<GrayFrame> = (0..40)
            .map(|i| {
                if i >= 20 {
                    with_block(&bg, 10 + i, 90, 20, 10)
                } else {
                    bg.clone()
                }
            })
            .collect();
        let mut a = Pipeline::new(config(0.4)).unwrap();
        let mut b = Pipeline::new(config(0.4)).unwrap();
        for f in &frames {
            let single = a.process_frame(f).unwrap();
            let sweep = b.process_frame_sweep(f, &[4.0, 16.0, 1e6]).unwrap();
            assert_eq!(sweep[1], single);
            assert!(sweep[2].detections.is_empty());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn windowed_matches_full_frame(
            bits in proptest::collection::vec(proptest::bool::weighted(0.45), 48 * 40),
            split in 5.0f64..35.0,
            inset in 0.0f64..10.0,
            cutoff in 0.0f64..0.5,
            se_w in 0usize..3,
            se_h in 0usize..3,
            open_it in 1usize..3,
            close_it in 1usize..3,
        ) {
            let mut roi = RoiSpec { cutoff_fraction: cutoff, ..Default::default() };
            roi.direction_polygons.insert("a".into(), Polygon::rect(inset, 0.0, 48.0 - inset, split));
            roi.direction_polygons.insert("b".into(), Polygon(vec![[0.0, split], [48.0, split + 3.0], [40.0, 40.0], [inset, 38.0]]));
            let mut cfg = PipelineConfig::new(roi, Band::Rgb);
            cfg.se = StructuringElement::rect(2 * se_w + 1, 2 * se_h + 1).unwrap();
            cfg.open_iterations = open_it;
            cfg.close_iterations = close_it;
            cfg.min_area = MinArea::Fixed(3.0);
            let mask = BinaryMask::from_bits(48, 40, bits.iter().map(|&b| b as u8).collect()).unwrap();
            let mut p = Pipeline::new(cfg.clone()).unwrap();
            p.process_frame(&GrayFrame::filled(48, 40, 0)).unwrap();
            let mut windowed = p.detect_from_mask(7, &mask);
            let mut full = detect_full_frame(&cfg, 7, &mask).unwrap();
            let key = |d: &Detection| (d.direction.clone(), d.bbox.y_min, d.bbox.x_min, d.area);
            windowed.sort_by_key(key);
            full.sort_by_key(key);
            prop_assert_eq!(windowed, full);
        }
    }

    #[test]
    fn parallel_flag_same_log() {
        let bg = GrayFrame::filled(160, 120, 80);
        let frames: Vec<GrayFrame> = (0..30).map(|i| with_block(&bg, 2 * i, 90, 20, 10)).collect();
        let seq = run_sequence(config(0.4), frames.clone()).unwrap();
        let mut c = config(0.4);
        c.parallel = true;
        let par = run_sequence(c, frames).unwrap();
        assert_eq!(seq.frames, par.frames);
    }
}
