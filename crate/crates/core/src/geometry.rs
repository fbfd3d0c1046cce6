//! Drone/sensor placement, scenario grids and geometry-derived detection
//! parameters (region-of-interest masks, expected vehicle size in pixels).
//!
//! Distances are in feet and angles in degrees throughout.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskops::BinaryMask;

/// Fraction of the frame height removed from the top by default.
pub const DEFAULT_CUTOFF_FRACTION: f64 = 0.4;

/// Roadway offset used by every field scenario.
pub const DEFAULT_ROAD_OFFSET_FT: f64 = 100.0;

/// Sensor band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Band {
    #[serde(rename = "RGB", alias = "rgb")]
    Rgb,
    #[serde(rename = "IR", alias = "ir", alias = "IFR", alias = "ifr")]
    Ir,
}

impl Band {
    pub fn as_str(self) -> &'static str {
        match self {
            Band::Rgb => "RGB",
            Band::Ir => "IR",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RGB" => Ok(Band::Rgb),
            "IR" | "IFR" => Ok(Band::Ir),
            _ => Err(Error::invalid("band", format!("`{s}` is not RGB or IR"))),
        }
    }
}

/// Placement of the drone and sensor relative to the monitored roadway.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    /// Height of the drone above the road surface.
    pub height_above_road: f64,
    /// Horizontal distance from the drone to the roadway.
    pub road_offset: f64,
    /// Horizontal angle of the line of sight relative to the roadway axis.
    pub azimuth_deg: f64,
    /// Downward tilt of the sensor from horizontal.
    pub depression_deg: f64,
    /// Field-of-view length along the road; metadata only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_length: Option<f64>,
    /// Drone ground speed in mph. Recorded, not used by detection.
    #[serde(default)]
    pub drone_speed: f64,
}

impl ScenarioGeometry {
    pub fn new(
        height_above_road: f64,
        road_offset: f64,
        azimuth_deg: f64,
        depression_deg: f64,
    ) -> Result<Self> {
        let geom = ScenarioGeometry {
            height_above_road,
            road_offset,
            azimuth_deg,
            depression_deg,
            fov_length: None,
            drone_speed: 0.0,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.height_above_road > 0.0 && self.height_above_road.is_finite()) {
            return Err(Error::invalid("height", "must be > 0"));
        }
        if !(self.road_offset >= 0.0 && self.road_offset.is_finite()) {
            return Err(Error::invalid("offset", "must be >= 0"));
        }
        if !(0.0..=180.0).contains(&self.azimuth_deg) {
            return Err(Error::invalid(
                "azimuth",
                format!("{} is outside [0, 180] degrees", self.azimuth_deg),
            ));
        }
        if !(self.depression_deg > 0.0 && self.depression_deg <= 90.0) {
            return Err(Error::invalid(
                "depression",
                format!("{} is outside (0, 90] degrees", self.depression_deg),
            ));
        }
        if let Some(l) = self.fov_length {
            if !(l > 0.0) {
                return Err(Error::invalid("fov_length", "must be > 0"));
            }
        }
        if !(self.drone_speed >= 0.0) {
            return Err(Error::invalid("velocity", "must be >= 0"));
        }
        Ok(())
    }

    /// Distance from the sensor to the abeam point on the roadway.
    pub fn slant_range(&self) -> f64 {
        slant_range(self.height_above_road, self.road_offset)
    }
}

/// Straight-line distance to the abeam roadway point: `sqrt(height² + offset²)`.
pub fn slant_range(height: f64, offset: f64) -> f64 {
    height.hypot(offset)
}

/// Altitude to command relative to the launch point so the drone sits
/// `target_height_above_road` above a road whose surface is
/// `road_minus_launch_elevation` above the launch point.
pub fn required_launch_altitude(
    target_height_above_road: f64,
    road_minus_launch_elevation: f64,
) -> Result<f64> {
    if !(target_height_above_road > 0.0) {
        return Err(Error::invalid("target_height", "must be > 0"));
    }
    let altitude = target_height_above_road + road_minus_launch_elevation;
    if altitude <= 0.0 {
        return Err(Error::invalid(
            "elevation",
            format!("commanded altitude {altitude} ft is not above the launch point"),
        ));
    }
    Ok(altitude)
}

/// Pinhole estimate of a vehicle's image area: `L·W·(focal/slant)²`.
pub fn expected_vehicle_area_px(
    geom: &ScenarioGeometry,
    focal_length_px: f64,
    vehicle_length: f64,
    vehicle_width: f64,
) -> Result<f64> {
    if !(focal_length_px > 0.0) {
        return Err(Error::invalid("focal_length_px", "must be > 0"));
    }
    Ok(area_at_range(geom.slant_range(), focal_length_px, vehicle_length, vehicle_width))
}

pub(crate) fn area_at_range(slant: f64, focal_px: f64, length: f64, width: f64) -> f64 {
    let scale = focal_px / slant;
    length * width * scale * scale
}

/// Axes of a scenario experiment. Depressions pair with azimuths
/// (one entry per azimuth) or hold a single value applied to all.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    pub heights: Vec<f64>,
    pub azimuths: Vec<f64>,
    pub depressions: Vec<f64>,
    #[serde(default = "default_velocities")]
    pub velocities: Vec<f64>,
    pub bands: Vec<Band>,
    #[serde(default = "default_offset")]
    pub road_offset: f64,
}

fn default_velocities() -> Vec<f64> {
    vec![0.0]
}

fn default_offset() -> f64 {
    DEFAULT_ROAD_OFFSET_FT
}

impl ScenarioGrid {
    /// The stationary free-flow field experiment: five heights, three
    /// azimuths, both bands. The 70–90° depression range used at 90°
    /// azimuth is recorded as 80°.
    pub fn stationary_free_flow() -> Self {
        ScenarioGrid {
            heights: vec![50.0, 100.0, 200.0, 300.0, 400.0],
            azimuths: vec![45.0, 90.0, 135.0],
            depressions: vec![45.0, 80.0, 45.0],
            velocities: vec![0.0],
            bands: vec![Band::Rgb, Band::Ir],
            road_offset: DEFAULT_ROAD_OFFSET_FT,
        }
    }
}

/// One expanded grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: ScenarioGeometry,
    pub band: Band,
}

impl Scenario {
    /// Stable identifier, e.g. `RGB-100ft-45deg`.
    pub fn label(&self) -> String {
        let g = &self.geometry;
        let mut s = format!(
            "{}-{}ft-{}deg",
            self.band,
            fmt_num(g.height_above_road),
            fmt_num(g.azimuth_deg)
        );
        if g.drone_speed > 0.0 {
            s.push_str(&format!("-{}mph", fmt_num(g.drone_speed)));
        }
        s
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Cartesian expansion band × azimuth × height × velocity.
pub fn expand_grid(grid: &ScenarioGrid) -> Result<Vec<Scenario>> {
    if grid.heights.is_empty() {
        return Err(Error::Empty("heights axis"));
    }
    if grid.azimuths.is_empty() {
        return Err(Error::Empty("azimuths axis"));
    }
    if grid.depressions.is_empty() {
        return Err(Error::Empty("depressions axis"));
    }
    if grid.velocities.is_empty() {
        return Err(Error::Empty("velocities axis"));
    }
    if grid.bands.is_empty() {
        return Err(Error::Empty("bands axis"));
    }
    if grid.depressions.len() != 1 && grid.depressions.len() != grid.azimuths.len() {
        return Err(Error::invalid(
            "depressions",
            format!(
                "expected 1 or {} entries (one per azimuth), got {}",
                grid.azimuths.len(),
                grid.depressions.len()
            ),
        ));
    }

    let mut out = Vec::with_capacity(
        grid.bands.len() * grid.azimuths.len() * grid.heights.len() * grid.velocities.len(),
    );
    for &band in &grid.bands {
        for (ai, &azimuth) in grid.azimuths.iter().enumerate() {
            let depression = if grid.depressions.len() == 1 {
                grid.depressions[0]
            } else {
                grid.depressions[ai]
            };
            for &height in &grid.heights {
                for &velocity in &grid.velocities {
                    let geometry = ScenarioGeometry {
                        height_above_road: height,
                        road_offset: grid.road_offset,
                        azimuth_deg: azimuth,
                        depression_deg: depression,
                        fov_length: None,
                        drone_speed: velocity,
                    };
                    geometry.validate()?;
                    out.push(Scenario { geometry, band });
                }
            }
        }
    }
    Ok(out)
}

/// Closed polygon in pixel coordinates (x right, y down). Pixel `(c, r)`
/// belongs to the polygon when its center `(c + 0.5, r + 0.5)` does.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon(pub Vec<[f64; 2]>);

impl Polygon {
    /// Axis-aligned rectangle covering pixel columns `x0..x1` and rows `y0..y1`.
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Sorted x positions where the horizontal line at `y` crosses an edge.
    fn crossings(&self, y: f64, out: &mut Vec<f64>) {
        out.clear();
        let pts = &self.0;
        let n = pts.len();
        for i in 0..n {
            let [x1, y1] = pts[i];
            let [x2, y2] = pts[(i + 1) % n];
            if (y1 > y) != (y2 > y) {
                out.push(x1 + (y - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        out.sort_by(f64::total_cmp);
    }

    /// Rasterize into `mask` (OR), touching only rows `>= first_row`.
    fn fill(&self, mask: &mut BinaryMask, first_row: usize) {
        if self.0.len() < 3 {
            return;
        }
        let width = mask.width();
        let mut xs = Vec::new();
        for row in first_row..mask.height() {
            self.crossings(row as f64 + 0.5, &mut xs);
            for pair in xs.chunks_exact(2) {
                // centers c + 0.5 in [pair[0], pair[1])
                let start = (pair[0] - 0.5).ceil().max(0.0);
                let end = (pair[1] - 0.5).ceil().min(width as f64);
                if start >= end {
                    continue;
                }
                for col in start as usize..end as usize {
                    mask.set(col, row, true);
                }
            }
        }
    }
}

/// Frame crop and per-direction polygons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSpec {
    #[serde(default = "default_cutoff")]
    pub cutoff_fraction: f64,
    #[serde(default)]
    pub direction_polygons: BTreeMap<String, Polygon>,
}

fn default_cutoff() -> f64 {
    DEFAULT_CUTOFF_FRACTION
}

impl Default for RoiSpec {
    fn default() -> Self {
        RoiSpec {
            cutoff_fraction: DEFAULT_CUTOFF_FRACTION,
            direction_polygons: BTreeMap::new(),
        }
    }
}

impl RoiSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.cutoff_fraction) {
            return Err(Error::invalid(
                "cutoff_fraction",
                format!("{} is outside [0, 1)", self.cutoff_fraction),
            ));
        }
        Ok(())
    }

    /// First row that survives the crop: `ceil(cutoff_fraction × height)`.
    pub fn cutoff_row(&self, frame_height: usize) -> usize {
        // absorb representation error such as 0.4 * 1000 = 400.00000000000006
        let raw = self.cutoff_fraction * frame_height as f64;
        let row = (raw - 1e-9).ceil().max(0.0) as usize;
        row.min(frame_height)
    }

    /// Errors if two direction polygons share a pixel once rasterized.
    pub fn check_disjoint(&self, frame_width: usize, frame_height: usize) -> Result<()> {
        let labels: Vec<&String> = self.direction_polygons.keys().collect();
        let masks = labels
            .iter()
            .map(|l| build_roi_mask(frame_width, frame_height, self, l))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..masks.len() {
            for j in i + 1..masks.len() {
                if masks[i].intersects(&masks[j]) {
                    return Err(Error::OverlappingDirections(
                        labels[i].clone(),
                        labels[j].clone(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Active pixels for `direction`: its polygon restricted to rows at or
/// below the cutoff row.
pub fn build_roi_mask(
    frame_width: usize,
    frame_height: usize,
    spec: &RoiSpec,
    direction: &str,
) -> Result<BinaryMask> {
    if frame_width == 0 || frame_height == 0 {
        return Err(Error::invalid("frame", "dimensions must be > 0"));
    }
    spec.validate()?;
    let polygon = spec
        .direction_polygons
        .get(direction)
        .ok_or_else(|| Error::UnknownDirection(direction.to_string()))?;
    let mut mask = BinaryMask::new(frame_width, frame_height);
    polygon.fill(&mut mask, spec.cutoff_row(frame_height));
    Ok(mask)
}
