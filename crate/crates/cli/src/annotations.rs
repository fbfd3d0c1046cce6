//! Line-delimited JSON box files for detections and ground truth.
//!
//! The first line is a header with the frame size and count; every other
//! line is one box. Frame indices never decrease from line to line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use aerotraffic_core::synth::{GroundTruthBox, GroundTruthFrame};
use aerotraffic_core::{BBox, Detection, DetectionLog, FrameDetections, GroundTruthLog, PipelineConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxSource {
    Detection,
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub width: usize,
    pub height: usize,
    pub frame_count: u64,
    pub source: BoxSource,
    /// Detector settings that produced a detection file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<PipelineConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub frame_index: u64,
    pub direction: String,
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
    pub source: BoxSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vehicle_id: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<usize>,
}

impl BoxRecord {
    pub fn bbox(&self) -> BBox {
        BBox::new(self.x_min, self.y_min, self.x_max, self.y_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationFile {
    pub header: Header,
    pub boxes: Vec<BoxRecord>,
}

impl AnnotationFile {
    pub fn from_detections(log: &DetectionLog) -> Self {
        let boxes = log
            .frames
            .iter()
            .flat_map(|f| &f.detections)
            .map(|d| BoxRecord {
                frame_index: d.frame_index,
                direction: d.direction.clone(),
                x_min: d.bbox.x_min,
                y_min: d.bbox.y_min,
                x_max: d.bbox.x_max,
                y_max: d.bbox.y_max,
                source: BoxSource::Detection,
                vehicle_id: None,
                area: Some(d.area),
            })
            .collect();
        AnnotationFile {
            header: Header {
                width: log.width,
                height: log.height,
                frame_count: log.frames.len() as u64,
                source: BoxSource::Detection,
                config: Some(log.config.clone()),
            },
            boxes,
        }
    }

    pub fn from_ground_truth(truth: &GroundTruthLog, width: usize, height: usize) -> Self {
        let boxes = truth
            .frames
            .iter()
            .flat_map(|f| f.boxes.iter().map(move |b| (f.frame_index, b)))
            .map(|(frame_index, b)| BoxRecord {
                frame_index,
                direction: b.direction.clone(),
                x_min: b.bbox.x_min,
                y_min: b.bbox.y_min,
                x_max: b.bbox.x_max,
                y_max: b.bbox.y_max,
                source: BoxSource::GroundTruth,
                vehicle_id: Some(b.vehicle_id),
                area: None,
            })
            .collect();
        AnnotationFile {
            header: Header {
                width,
                height,
                frame_count: truth.frames.len() as u64,
                source: BoxSource::GroundTruth,
                config: None,
            },
            boxes,
        }
    }

    fn grouped(&self) -> Vec<Vec<&BoxRecord>> {
        let mut frames = vec![Vec::new(); self.header.frame_count as usize];
        for b in &self.boxes {
            frames[b.frame_index as usize].push(b);
        }
        frames
    }

    /// Rebuild the detection log, one entry per frame.
    pub fn to_detection_log(&self, path: &Path) -> CliResult<DetectionLog> {
        if self.header.source != BoxSource::Detection {
            return Err(CliError::format(path, 1, "expected a detection file"));
        }
        let config = self
            .header
            .config
            .clone()
            .ok_or_else(|| CliError::format(path, 1, "detection header lacks `config`"))?;
        let frames = self
            .grouped()
            .into_iter()
            .enumerate()
            .map(|(i, boxes)| FrameDetections {
                frame_index: i as u64,
                detections: boxes
                    .into_iter()
                    .map(|b| Detection {
                        frame_index: b.frame_index,
                        direction: b.direction.clone(),
                        bbox: b.bbox(),
                        area: b.area.unwrap_or_else(|| b.bbox().area() as usize),
                    })
                    .collect(),
            })
            .collect();
        Ok(DetectionLog {
            config,
            width: self.header.width,
            height: self.header.height,
            frames,
        })
    }

    pub fn to_ground_truth(&self, path: &Path) -> CliResult<GroundTruthLog> {
        if self.header.source != BoxSource::GroundTruth {
            return Err(CliError::format(path, 1, "expected a ground-truth file"));
        }
        let frames = self
            .grouped()
            .into_iter()
            .enumerate()
            .map(|(i, boxes)| GroundTruthFrame {
                frame_index: i as u64,
                boxes: boxes
                    .into_iter()
                    .enumerate()
                    .map(|(k, b)| GroundTruthBox {
                        direction: b.direction.clone(),
                        bbox: b.bbox(),
                        vehicle_id: b.vehicle_id.unwrap_or(k),
                    })
                    .collect(),
            })
            .collect();
        Ok(GroundTruthLog { frames })
    }

    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        serde_json::to_writer(&mut out, &Tagged::Header(&self.header))?;
        out.write_all(b"\n")?;
        for b in &self.boxes {
            serde_json::to_writer(&mut out, &Tagged::Box(b))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| CliError::io(path, e))?;
        w.flush().map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let mut header: Option<Header> = None;
        let mut boxes: Vec<BoxRecord> = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let n = i + 1;
            let line = line.map_err(|e| CliError::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: Owned = serde_json::from_str(&line)
                .map_err(|e| CliError::format(path, n, e.to_string()))?;
            match (parsed, &header) {
                (Owned::Header(h), None) => header = Some(*h),
                (Owned::Header(_), Some(_)) => {
                    return Err(CliError::format(path, n, "second header line"))
                }
                (Owned::Box(_), None) => {
                    return Err(CliError::format(path, n, "box before the header line"))
                }
                (Owned::Box(b), Some(h)) => {
                    check_box(&b, h, boxes.last()).map_err(|m| CliError::format(path, n, m))?;
                    boxes.push(b);
                }
            }
        }
        let header = header.ok_or_else(|| CliError::format(path, 1, "missing header line"))?;
        Ok(AnnotationFile { header, boxes })
    }
}

fn check_box(b: &BoxRecord, h: &Header, prev: Option<&BoxRecord>) -> Result<(), String> {
    if b.source != h.source {
        return Err("box source differs from the header".into());
    }
    if b.frame_index >= h.frame_count {
        return Err(format!("frame_index {} >= frame_count {}", b.frame_index, h.frame_count));
    }
    if let Some(p) = prev {
        if b.frame_index < p.frame_index {
            return Err(format!("frame_index {} after {}", b.frame_index, p.frame_index));
        }
    }
    if !(b.x_min < b.x_max && b.y_min < b.y_max) {
        return Err("empty or inverted box".into());
    }
    if b.x_max as usize > h.width || b.y_max as usize > h.height {
        return Err(format!("box exceeds the {}x{} frame", h.width, h.height));
    }
    Ok(())
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Tagged<'a> {
    Header(&'a Header),
    Box(&'a BoxRecord),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Owned {
    Header(Box<Header>),
    Box(BoxRecord),
}

#[cfg(test)]
mod tests {
    use super::*;
    use aerotraffic_core::geometry::Polygon;
    use aerotraffic_core::{Band, RoiSpec};

    fn log() -> DetectionLog {
        let mut roi = RoiSpec::default();
        roi.direction_polygons.insert("south".into(), Polygon::rect(0.0, 0.0, 32.0, 24.0));
        let det = |f: u64, x: u32| Detection {
            frame_index: f,
            direction: "south".into(),
            bbox: BBox::new(x, 12, x + 5, 20),
            area: 40,
        };
        DetectionLog {
            config: PipelineConfig::new(roi, Band::Ir),
            width: 32,
            height: 24,
            frames: vec![
                FrameDetections { frame_index: 0, detections: vec![] },
                FrameDetections { frame_index: 1, detections: vec![det(1, 2), det(1, 20)] },
                FrameDetections { frame_index: 2, detections: vec![] },
            ],
        }
    }

    #[test]
    fn detection_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let original = log();
        AnnotationFile::from_detections(&original).write(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("{\"kind\":\"header\""));
        let back = AnnotationFile::read(&path).unwrap().to_detection_log(&path).unwrap();
        assert_eq!(back, original);
    }

    #[test]
    fn rejects_out_of_order_and_out_of_bounds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut file = AnnotationFile::from_detections(&log());
        file.boxes.swap(0, 1);
        file.boxes[0].frame_index = 2;
        file.write(&path).unwrap();
        let err = AnnotationFile::read(&path).unwrap_err();
        assert!(matches!(err, CliError::Format { line: 3, .. }), "{err}");

        let mut file = AnnotationFile::from_detections(&log());
        file.boxes[1].x_max = 40;
        file.write(&path).unwrap();
        assert!(matches!(AnnotationFile::read(&path).unwrap_err(), CliError::Format { line: 3, .. }));
    }
}
