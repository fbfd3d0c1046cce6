//! Frames with detection boxes, ground-truth boxes and the cutoff line drawn in.

use std::path::Path;

use aerotraffic_core::{BBox, DetectionLog, GroundTruthLog, RgbFrame};

use crate::error::{CliError, CliResult};
use crate::frames::{frame_file_name, write_rgb_png, FrameSource};

pub const DETECTION_COLOR: [u8; 3] = [0, 255, 0];
pub const TRUTH_COLOR: [u8; 3] = [255, 0, 255];
pub const CUTOFF_COLOR: [u8; 3] = [255, 255, 0];

fn put(frame: &mut RgbFrame, x: usize, y: usize, c: [u8; 3]) {
    let w = frame.width();
    let i = (y * w + x) * 3;
    frame.pixels_mut()[i..i + 3].copy_from_slice(&c);
}

/// One-pixel outline on the box's edge pixels. `dashed` skips every
/// other run of three pixels.
pub fn draw_box(frame: &mut RgbFrame, b: &BBox, color: [u8; 3], dashed: bool) {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let x1 = b.x_max.min(w);
    let y1 = b.y_max.min(h);
    if b.x_min >= x1 || b.y_min >= y1 {
        return;
    }
    let on = |k: u32| !dashed || (k / 3) % 2 == 0;
    for x in b.x_min..x1 {
        if on(x - b.x_min) {
            put(frame, x as usize, b.y_min as usize, color);
            put(frame, x as usize, (y1 - 1) as usize, color);
        }
    }
    for y in b.y_min..y1 {
        if on(y - b.y_min) {
            put(frame, b.x_min as usize, y as usize, color);
            put(frame, (x1 - 1) as usize, y as usize, color);
        }
    }
}

pub fn draw_cutoff(frame: &mut RgbFrame, row: usize) {
    if row < frame.height() {
        for x in 0..frame.width() {
            put(frame, x, row, CUTOFF_COLOR);
        }
    }
}

/// Overlay one frame: the cutoff line, then truth (dashed), then detections.
pub fn annotate_frame(
    frame: &RgbFrame,
    detections: &[BBox],
    truth: &[BBox],
    cutoff_row: usize,
) -> RgbFrame {
    let mut out = frame.clone();
    draw_cutoff(&mut out, cutoff_row);
    for b in truth {
        draw_box(&mut out, b, TRUTH_COLOR, true);
    }
    for b in detections {
        draw_box(&mut out, b, DETECTION_COLOR, false);
    }
    out
}

/// Write annotated copies of the frames at `indices` into `out_dir`.
pub fn annotate_frames(
    frames: &dyn FrameSource,
    log: &DetectionLog,
    truth: Option<&GroundTruthLog>,
    indices: &[u64],
    out_dir: &Path,
) -> CliResult<usize> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let cutoff = log.config.roi.cutoff_row(log.height);
    for &i in indices {
        if i as usize >= frames.frame_count() {
            return Err(CliError::Core(aerotraffic_core::Error::invalid(
                "frame_index",
                format!("frame {i} is past the {}-frame sequence", frames.frame_count()),
            )));
        }
        let dets = log
            .frame(i)
            .ok_or_else(|| {
                CliError::Core(aerotraffic_core::Error::invalid(
                    "frame_index",
                    format!("frame {i} is not in the detection log"),
                ))
            })?
            .detections
            .iter()
            .map(|d| d.bbox)
            .collect::<Vec<_>>();
        let gts: Vec<BBox> = truth
            .and_then(|t| t.frame(i))
            .map(|f| f.boxes.iter().map(|b| b.bbox).collect())
            .unwrap_or_default();
        let img = frames.read_frame(i as usize)?.to_rgb();
        let out = annotate_frame(&img, &dets, &gts, cutoff);
        write_rgb_png(&out_dir.join(frame_file_name(i)), &out)?;
    }
    Ok(indices.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use aerotraffic_core::GrayFrame;

    fn blank() -> RgbFrame {
        RgbFrame::from(&GrayFrame::filled(20, 16, 50))
    }

    fn colored(f: &RgbFrame, c: [u8; 3]) -> usize {
        f.pixels().chunks(3).filter(|p| *p == c).count()
    }

    #[test]
    fn empty_log_only_adds_cutoff() {
        let out = annotate_frame(&blank(), &[], &[], 7);
        assert_eq!(colored(&out, CUTOFF_COLOR), 20);
        let changed = out.pixels().chunks(3).zip(blank().pixels().chunks(3)).filter(|(a, b)| a != b).count();
        assert_eq!(changed, 20);
    }

    #[test]
    fn one_detection_one_outline() {
        let b = BBox::new(2, 9, 12, 14);
        let out = annotate_frame(&blank(), &[b], &[], 3);
        // perimeter of a 10x5 box
        assert_eq!(colored(&out, DETECTION_COLOR), 2 * 10 + 2 * 5 - 4);
        let f = &out;
        let at = |x: usize, y: usize| &f.pixels()[(y * 20 + x) * 3..(y * 20 + x) * 3 + 3];
        assert_eq!(at(2, 9), DETECTION_COLOR);
        assert_eq!(at(11, 13), DETECTION_COLOR);
        assert_eq!(at(5, 11), [50, 50, 50]);
    }

    #[test]
    fn truth_is_dashed() {
        let b = BBox::new(0, 8, 20, 16);
        let out = annotate_frame(&blank(), &[], &[b], 0);
        let n = colored(&out, TRUTH_COLOR);
        assert!(n > 0 && n < 2 * 20 + 2 * 8 - 4);
    }
}
