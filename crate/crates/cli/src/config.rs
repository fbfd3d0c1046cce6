//! Run configuration: a TOML document naming one input source, the
//! scenarios to evaluate, detector overrides and what to emit.
//!
//! ```toml
//! output_dir = "out"
//!
//! [input]
//! frames = "frames/"            # or a [input.synth] table
//!
//! [scenario]                    # or a [grid] table
//! height_ft = 100
//! azimuth_deg = 90
//! depression_deg = 80
//! band = "RGB"
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use aerotraffic_core::eval::DEFAULT_IOU_MIN;
use aerotraffic_core::geometry::DEFAULT_ROAD_OFFSET_FT;
use aerotraffic_core::pipeline::MinArea;
use aerotraffic_core::synth::HighwayOptions;
use aerotraffic_core::{
    expand_grid, Band, FrameSamplingPolicy, PipelineConfig, Polygon, RoiSpec, Scenario,
    ScenarioGeometry, ScenarioGrid, StructuringElement,
};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Where frames come from.
#[derive(Debug, Clone, PartialEq)]
pub enum InputSource {
    /// Directory of numbered raster files, with optional ground truth.
    Frames { dir: PathBuf, truth: Option<PathBuf> },
    Synth(SynthSource),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynthSource {
    /// Highway preset; the band follows each scenario.
    Highway(HighwayOptions),
    /// Full scene description (JSON or TOML), relative to the config file.
    SceneFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmitFlags {
    pub csv: bool,
    pub svg: bool,
    pub annotated_frames: bool,
}

impl Default for EmitFlags {
    fn default() -> Self {
        EmitFlags {
            csv: true,
            svg: true,
            annotated_frames: false,
        }
    }
}

/// Detector settings; anything unset keeps the band default.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub classify_threshold_sq: Option<f64>,
    pub match_threshold_sq: Option<f64>,
    pub learning_rate: Option<f64>,
    pub max_components: Option<usize>,
    pub background_ratio: Option<f64>,
    pub initial_variance: Option<f64>,
    pub min_variance: Option<f64>,
    pub warmup_frames: Option<usize>,
    pub structuring_element: Option<[usize; 2]>,
    pub open_iterations: Option<usize>,
    pub close_iterations: Option<usize>,
    pub min_area: Option<MinArea>,
    pub focal_length_px: Option<f64>,
    pub vehicle_length_ft: Option<f64>,
    pub vehicle_width_ft: Option<f64>,
    pub color_mode: Option<bool>,
    pub parallel: Option<bool>,
    pub directions: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: InputSource,
    pub scenarios: Vec<Scenario>,
    pub detector: DetectorSection,
    /// `None` means: take it from the synthetic scene, or use the whole
    /// frame below the cutoff as one direction.
    pub roi: Option<RoiSpec>,
    pub cutoff_fraction: f64,
    pub sampling: FrameSamplingPolicy,
    pub iou_min: f64,
    pub output_dir: Option<PathBuf>,
    pub emit: EmitFlags,
}

// Raw document shape; every table rejects unknown keys.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    output_dir: Option<PathBuf>,
    input: Option<RawInput>,
    scenario: Option<RawScenario>,
    grid: Option<RawGrid>,
    #[serde(default)]
    detector: DetectorSection,
    roi: Option<RawRoi>,
    #[serde(default)]
    eval: RawEval,
    #[serde(default)]
    emit: RawEmit,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    frames: Option<PathBuf>,
    truth: Option<PathBuf>,
    synth: Option<RawSynth>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynth {
    preset: Option<String>,
    scene: Option<PathBuf>,
    width: Option<u32>,
    height: Option<u32>,
    frame_count: Option<u64>,
    seed: Option<u64>,
    lanes_per_direction: Option<u32>,
    vehicle_size: Option<[u32; 2]>,
    headway: Option<u64>,
    speeds: Option<Vec<i64>>,
    road_intensity: Option<u8>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    height_ft: f64,
    azimuth_deg: f64,
    depression_deg: f64,
    #[serde(default = "default_offset")]
    road_offset_ft: f64,
    band: Band,
    #[serde(default)]
    drone_speed_mph: f64,
    fov_length_ft: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    preset: Option<String>,
    heights_ft: Option<Vec<f64>>,
    azimuths_deg: Option<Vec<f64>>,
    depressions_deg: Option<Vec<f64>>,
    velocities_mph: Option<Vec<f64>>,
    bands: Option<Vec<Band>>,
    road_offset_ft: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoi {
    #[serde(default = "default_cutoff")]
    cutoff_fraction: f64,
    #[serde(default)]
    directions: BTreeMap<String, Polygon>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEval {
    #[serde(default = "default_iou")]
    iou_min: f64,
    #[serde(default = "default_start")]
    sample_start: u64,
    #[serde(default = "default_end")]
    sample_end: u64,
    #[serde(default = "default_step")]
    sample_step: u64,
}

impl Default for RawEval {
    fn default() -> Self {
        let p = FrameSamplingPolicy::default();
        RawEval {
            iou_min: DEFAULT_IOU_MIN,
            sample_start: p.start,
            sample_end: p.end,
            sample_step: p.step,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEmit {
    #[serde(default = "yes")]
    csv: bool,
    #[serde(default = "yes")]
    svg: bool,
    #[serde(default)]
    annotated_frames: bool,
}

impl Default for RawEmit {
    fn default() -> Self {
        RawEmit {
            csv: true,
            svg: true,
            annotated_frames: false,
        }
    }
}

fn default_offset() -> f64 {
    DEFAULT_ROAD_OFFSET_FT
}
fn default_cutoff() -> f64 {
    aerotraffic_core::geometry::DEFAULT_CUTOFF_FRACTION
}
fn default_iou() -> f64 {
    DEFAULT_IOU_MIN
}
fn default_start() -> u64 {
    FrameSamplingPolicy::default().start
}
fn default_end() -> u64 {
    FrameSamplingPolicy::default().end
}
fn default_step() -> u64 {
    FrameSamplingPolicy::default().step
}
fn yes() -> bool {
    true
}

/// Map a geometry validation field to the config key that set it.
fn geometry_key(field: &str, grid: bool) -> &'static str {
    match (field, grid) {
        ("height", false) => "scenario.height_ft",
        ("height", true) => "grid.heights_ft",
        ("azimuth", false) => "scenario.azimuth_deg",
        ("azimuth", true) => "grid.azimuths_deg",
        ("depression", false) => "scenario.depression_deg",
        ("depression", true) => "grid.depressions_deg",
        ("offset", false) => "scenario.road_offset_ft",
        ("offset", true) => "grid.road_offset_ft",
        ("velocity", false) => "scenario.drone_speed_mph",
        ("velocity", true) => "grid.velocities_mph",
        ("fov_length", _) => "scenario.fov_length_ft",
        (_, false) => "scenario",
        (_, true) => "grid",
    }
}

fn relabel(e: aerotraffic_core::Error, grid: bool) -> CliError {
    match e {
        aerotraffic_core::Error::Invalid { field, reason } => {
            CliError::config(geometry_key(&field, grid), reason)
        }
        aerotraffic_core::Error::Empty(what) => CliError::config("grid", format!("{what} is empty")),
        other => CliError::Core(other),
    }
}

fn toml_error(text: &str, e: toml::de::Error) -> CliError {
    let message = e.message().to_string();
    let field = message
        .split('`')
        .nth(1)
        .filter(|_| message.starts_with("unknown field") || message.starts_with("missing field"))
        .map(str::to_string)
        .unwrap_or_else(|| "<document>".to_string());
    let location = e
        .span()
        .map(|s| format!(" (line {})", text[..s.start.min(text.len())].lines().count().max(1)))
        .unwrap_or_default();
    CliError::config(field, format!("{message}{location}"))
}

/// Parse and validate a run configuration.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| toml_error(text, e))?;

    let input = match raw.input {
        None => return Err(CliError::config("input", "missing input source")),
        Some(RawInput {
            frames: Some(_),
            synth: Some(_),
            ..
        }) => {
            return Err(CliError::config(
                "input",
                "give exactly one of `frames` and `synth`",
            ))
        }
        Some(RawInput {
            frames: Some(dir),
            truth,
            ..
        }) => InputSource::Frames { dir, truth },
        Some(RawInput {
            synth: Some(s),
            truth: None,
            ..
        }) => InputSource::Synth(synth_source(s)?),
        Some(RawInput {
            synth: Some(_), ..
        }) => {
            return Err(CliError::config(
                "input.truth",
                "synthetic input brings its own ground truth",
            ))
        }
        Some(_) => return Err(CliError::config("input", "missing input source")),
    };

    let scenarios = match (raw.scenario, raw.grid) {
        (Some(_), Some(_)) => {
            return Err(CliError::config("scenario", "give either [scenario] or [grid], not both"))
        }
        (None, None) => return Err(CliError::config("scenario", "missing [scenario] or [grid]")),
        (Some(s), None) => {
            let geometry = ScenarioGeometry {
                height_above_road: s.height_ft,
                road_offset: s.road_offset_ft,
                azimuth_deg: s.azimuth_deg,
                depression_deg: s.depression_deg,
                fov_length: s.fov_length_ft,
                drone_speed: s.drone_speed_mph,
            };
            geometry.validate().map_err(|e| relabel(e, false))?;
            vec![Scenario {
                geometry,
                band: s.band,
            }]
        }
        (None, Some(g)) => expand_grid(&grid_from(g)?).map_err(|e| relabel(e, true))?,
    };

    validate_detector(&raw.detector)?;

    let cutoff_fraction = raw.roi.as_ref().map_or_else(default_cutoff, |r| r.cutoff_fraction);
    let roi = match raw.roi {
        Some(r) if !r.directions.is_empty() => Some(RoiSpec {
            cutoff_fraction: r.cutoff_fraction,
            direction_polygons: r.directions,
        }),
        _ => None,
    };
    if !(0.0..1.0).contains(&cutoff_fraction) {
        return Err(CliError::config(
            "roi.cutoff_fraction",
            format!("{cutoff_fraction} is outside [0, 1)"),
        ));
    }
    if let Some(roi) = &roi {
        for (name, poly) in &roi.direction_polygons {
            if poly.0.len() < 3 {
                return Err(CliError::config(
                    format!("roi.directions.{name}"),
                    "a polygon needs at least 3 vertices",
                ));
            }
        }
    }
    if let (Some(dirs), Some(roi)) = (&raw.detector.directions, &roi) {
        if let Some(d) = dirs.iter().find(|d| !roi.direction_polygons.contains_key(*d)) {
            return Err(CliError::config(
                "detector.directions",
                format!("`{d}` has no polygon in [roi.directions]"),
            ));
        }
    }

    let e = raw.eval;
    if !(e.iou_min > 0.0 && e.iou_min <= 1.0) {
        return Err(CliError::config("eval.iou_min", format!("{} is outside (0, 1]", e.iou_min)));
    }
    let sampling = FrameSamplingPolicy {
        start: e.sample_start,
        end: e.sample_end,
        step: e.sample_step,
    };
    if sampling.step == 0 {
        return Err(CliError::config("eval.sample_step", "must be >= 1"));
    }
    if sampling.start > sampling.end {
        return Err(CliError::config("eval.sample_start", "must not exceed eval.sample_end"));
    }

    Ok(RunConfig {
        input,
        scenarios,
        detector: raw.detector,
        roi,
        cutoff_fraction,
        sampling,
        iou_min: e.iou_min,
        output_dir: raw.output_dir,
        emit: EmitFlags {
            csv: raw.emit.csv,
            svg: raw.emit.svg,
            annotated_frames: raw.emit.annotated_frames,
        },
    })
}

fn synth_source(s: RawSynth) -> CliResult<SynthSource> {
    let preset_fields = s.width.is_some()
        || s.height.is_some()
        || s.frame_count.is_some()
        || s.seed.is_some()
        || s.lanes_per_direction.is_some()
        || s.vehicle_size.is_some()
        || s.headway.is_some()
        || s.speeds.is_some()
        || s.road_intensity.is_some();
    if let Some(path) = s.scene {
        if s.preset.is_some() || preset_fields {
            return Err(CliError::config(
                "input.synth.scene",
                "a scene file cannot be combined with preset settings",
            ));
        }
        return Ok(SynthSource::SceneFile(path));
    }
    match s.preset.as_deref() {
        None | Some("highway") => {}
        Some(other) => {
            return Err(CliError::config(
                "input.synth.preset",
                format!("unknown preset `{other}` (expected `highway`)"),
            ))
        }
    }
    let d = HighwayOptions::default();
    let opts = HighwayOptions {
        width: s.width.unwrap_or(d.width),
        height: s.height.unwrap_or(d.height),
        frame_count: s.frame_count.unwrap_or(d.frame_count),
        seed: s.seed.unwrap_or(d.seed),
        band: d.band,
        lanes_per_direction: s.lanes_per_direction.unwrap_or(d.lanes_per_direction),
        vehicle_size: s.vehicle_size.map_or(d.vehicle_size, |[a, b]| (a, b)),
        headway: s.headway.unwrap_or(d.headway),
        speeds: s.speeds.unwrap_or(d.speeds),
        road_intensity: s.road_intensity.unwrap_or(d.road_intensity),
    };
    if opts.speeds.is_empty() || opts.speeds.iter().any(|&v| v <= 0) {
        return Err(CliError::config("input.synth.speeds", "speeds must be positive"));
    }
    if opts.frame_count == 0 {
        return Err(CliError::config("input.synth.frame_count", "must be >= 1"));
    }
    Ok(SynthSource::Highway(opts))
}

fn grid_from(g: RawGrid) -> CliResult<ScenarioGrid> {
    let base = match g.preset.as_deref() {
        None => None,
        Some("stationary") => Some(ScenarioGrid::stationary_free_flow()),
        Some(other) => {
            return Err(CliError::config(
                "grid.preset",
                format!("unknown preset `{other}` (expected `stationary`)"),
            ))
        }
    };
    let take = |v: Option<Vec<f64>>, from_base: Option<Vec<f64>>, key: &str| {
        v.or(from_base)
            .ok_or_else(|| CliError::config(format!("grid.{key}"), "missing"))
    };
    Ok(ScenarioGrid {
        heights: take(g.heights_ft, base.as_ref().map(|b| b.heights.clone()), "heights_ft")?,
        azimuths: take(g.azimuths_deg, base.as_ref().map(|b| b.azimuths.clone()), "azimuths_deg")?,
        depressions: take(
            g.depressions_deg,
            base.as_ref().map(|b| b.depressions.clone()),
            "depressions_deg",
        )?,
        velocities: g
            .velocities_mph
            .or(base.as_ref().map(|b| b.velocities.clone()))
            .unwrap_or_else(|| vec![0.0]),
        bands: g
            .bands
            .or(base.as_ref().map(|b| b.bands.clone()))
            .ok_or_else(|| CliError::config("grid.bands", "missing"))?,
        road_offset: g
            .road_offset_ft
            .or(base.as_ref().map(|b| b.road_offset))
            .unwrap_or(DEFAULT_ROAD_OFFSET_FT),
    })
}

fn validate_detector(d: &DetectorSection) -> CliResult<()> {
    let positive = |v: Option<f64>, key: &str| match v {
        Some(x) if !(x > 0.0 && x.is_finite()) => Err(CliError::config(
            format!("detector.{key}"),
            format!("{x} must be > 0"),
        )),
        _ => Ok(()),
    };
    positive(d.classify_threshold_sq, "classify_threshold_sq")?;
    positive(d.match_threshold_sq, "match_threshold_sq")?;
    positive(d.initial_variance, "initial_variance")?;
    positive(d.min_variance, "min_variance")?;
    positive(d.focal_length_px, "focal_length_px")?;
    positive(d.vehicle_length_ft, "vehicle_length_ft")?;
    positive(d.vehicle_width_ft, "vehicle_width_ft")?;
    if let Some(a) = d.learning_rate {
        if !(a > 0.0 && a <= 1.0) {
            return Err(CliError::config("detector.learning_rate", format!("{a} is outside (0, 1]")));
        }
    }
    if let Some(b) = d.background_ratio {
        if !(b > 0.0 && b <= 1.0) {
            return Err(CliError::config("detector.background_ratio", format!("{b} is outside (0, 1]")));
        }
    }
    if let Some(k) = d.max_components {
        if !(1..=255).contains(&k) {
            return Err(CliError::config("detector.max_components", format!("{k} is outside 1..=255")));
        }
    }
    if let Some([w, h]) = d.structuring_element {
        StructuringElement::rect(w, h)
            .map_err(|e| CliError::config("detector.structuring_element", e.to_string()))?;
    }
    if d.open_iterations == Some(0) {
        return Err(CliError::config("detector.open_iterations", "must be >= 1"));
    }
    if d.close_iterations == Some(0) {
        return Err(CliError::config("detector.close_iterations", "must be >= 1"));
    }
    if let Some(MinArea::Fixed(v)) = d.min_area {
        if v < 0.0 {
            return Err(CliError::config("detector.min_area", format!("{v} is negative")));
        }
    }
    if d.min_area == Some(MinArea::Auto) && d.focal_length_px.is_none() {
        return Err(CliError::config(
            "detector.focal_length_px",
            "required when min_area = \"auto\"",
        ));
    }
    Ok(())
}

impl DetectorSection {
    /// Band defaults overlaid with the settings given here.
    pub fn pipeline_config(
        &self,
        roi: RoiSpec,
        band: Band,
        geometry: Option<ScenarioGeometry>,
    ) -> CliResult<PipelineConfig> {
        let mut c = PipelineConfig::new(roi, band);
        let m = &mut c.mixture;
        if let Some(v) = self.classify_threshold_sq {
            m.classify_threshold_sq = v;
        }
        if let Some(v) = self.match_threshold_sq {
            m.match_threshold_sq = v;
        }
        if let Some(v) = self.learning_rate {
            m.learning_rate = v;
        }
        if let Some(v) = self.max_components {
            m.max_components = v;
        }
        if let Some(v) = self.background_ratio {
            m.background_ratio = v;
        }
        if let Some(v) = self.initial_variance {
            m.initial_variance = v;
        }
        if let Some(v) = self.min_variance {
            m.min_variance = v;
        }
        if let Some(v) = self.warmup_frames {
            m.warmup_frames = v;
        }
        if let Some([w, h]) = self.structuring_element {
            c.se = StructuringElement { width: w, height: h };
        }
        if let Some(v) = self.open_iterations {
            c.open_iterations = v;
        }
        if let Some(v) = self.close_iterations {
            c.close_iterations = v;
        }
        if let Some(v) = self.min_area {
            c.min_area = v;
        }
        c.focal_length_px = self.focal_length_px;
        if let Some(v) = self.vehicle_length_ft {
            c.vehicle_length_ft = v;
        }
        if let Some(v) = self.vehicle_width_ft {
            c.vehicle_width_ft = v;
        }
        if let Some(v) = self.color_mode {
            c.color_mode = v;
        }
        if let Some(v) = self.parallel {
            c.parallel = v;
        }
        if let Some(d) = &self.directions {
            c.directions = d.clone();
        }
        c.geometry = geometry;
        c.validate()?;
        Ok(c)
    }
}

/// One direction called `all` covering the whole frame below the cutoff.
pub fn whole_frame_roi(width: usize, height: usize, cutoff_fraction: f64) -> RoiSpec {
    let mut direction_polygons = BTreeMap::new();
    direction_polygons.insert(
        "all".to_string(),
        Polygon::rect(0.0, 0.0, width as f64, height as f64),
    );
    RoiSpec {
        cutoff_fraction,
        direction_polygons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[input]
frames = "frames"

[scenario]
height_ft = 100
azimuth_deg = 90
depression_deg = 80
band = "IR"
"#;

    #[test]
    fn minimal_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.input, InputSource::Frames { dir: "frames".into(), truth: None });
        assert_eq!(c.scenarios.len(), 1);
        assert_eq!(c.cutoff_fraction, 0.4);
        assert_eq!(c.iou_min, 0.3);
        assert_eq!(c.sampling, FrameSamplingPolicy { start: 200, end: 700, step: 5 });
        assert_eq!(c.emit, EmitFlags::default());
        let roi = whole_frame_roi(64, 48, c.cutoff_fraction);
        let s = c.scenarios[0];
        let p = c.detector.pipeline_config(roi, s.band, Some(s.geometry)).unwrap();
        assert_eq!(p.mixture.classify_threshold_sq, 36.0);
        assert_eq!(s.geometry.road_offset, 100.0);
    }

    #[test]
    fn stationary_grid_has_fifteen_per_band() {
        let text = "[input.synth]\npreset = \"highway\"\n[grid]\npreset = \"stationary\"\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.scenarios.len(), 30);
        for band in [Band::Rgb, Band::Ir] {
            assert_eq!(c.scenarios.iter().filter(|s| s.band == band).count(), 15);
        }
    }

    fn field_of(text: &str) -> String {
        match parse_config(text).unwrap_err() {
            CliError::Config { field, .. } => field,
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of(&MINIMAL.replace("= 90", "= 200")), "scenario.azimuth_deg");
        assert_eq!(field_of(&MINIMAL.replace("[input]\nframes = \"frames\"\n", "")), "input");
        assert_eq!(field_of(&format!("{MINIMAL}\n[detector]\nbogus = 1\n")), "bogus");
        assert_eq!(field_of(&format!("{MINIMAL}\n[eval]\niou_min = 0\n")), "eval.iou_min");
        assert_eq!(
            field_of(&format!("{MINIMAL}\n[detector]\nstructuring_element = [2, 3]\n")),
            "detector.structuring_element"
        );
        assert_eq!(
            field_of("[input]\nframes = \"a\"\n[grid]\nheights_ft = [50]\nazimuths_deg = [200]\ndepressions_deg = [45]\nbands = [\"RGB\"]\n"),
            "grid.azimuths_deg"
        );
        assert_eq!(field_of(&MINIMAL.replace("depression_deg = 80\n", "")), "depression_deg");
        let both = MINIMAL.replace("frames = \"frames\"", "frames = \"f\"\n[input.synth]\nseed = 3");
        assert_eq!(field_of(&both), "input");
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config(&format!("{MINIMAL}typo = 3\n")).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }
}
