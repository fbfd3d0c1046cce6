//! Ground-truth matching and precision / recall / F1 over sampled frames.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::geometry::{fmt_num, Band};
use crate::pipeline::DetectionLog;
use crate::synth::GroundTruthLog;

/// Default IoU needed for a detection to count as a hit.
pub const DEFAULT_IOU_MIN: f64 = 0.3;

/// Frames `start, start + step, …` up to and including `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSamplingPolicy {
    pub start: u64,
    pub end: u64,
    pub step: u64,
}

impl Default for FrameSamplingPolicy {
    fn default() -> Self {
        FrameSamplingPolicy {
            start: 200,
            end: 700,
            step: 5,
        }
    }
}

impl FrameSamplingPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.step == 0 {
            return Err(Error::invalid("sampling.step", "must be >= 1"));
        }
        if self.start > self.end {
            return Err(Error::invalid("sampling", "start must not exceed end"));
        }
        Ok(())
    }
}

pub fn sample_frames(policy: &FrameSamplingPolicy) -> Result<Vec<u64>> {
    policy.validate()?;
    Ok((policy.start..=policy.end).step_by(policy.step as usize).collect())
}

/// Intersection over union; 0 when the union is empty.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PerFrameCounts {
    pub frame_index: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Greedy one-to-one assignment by descending IoU among pairs with
/// `IoU >= iou_min`; ties go to the lower detection, then lower truth index.
/// Returns `(det, gt)` index pairs.
pub fn match_pairs(dets: &[BBox], gts: &[BBox], iou_min: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, d) in dets.iter().enumerate() {
        for (j, g) in gts.iter().enumerate() {
            let v = iou(d, g);
            if v >= iou_min && v > 0.0 {
                candidates.push((v, i, j));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut det_used = vec![false; dets.len()];
    let mut gt_used = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !det_used[i] && !gt_used[j] {
            det_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs
}

pub fn match_frame(frame_index: u64, dets: &[BBox], gts: &[BBox], iou_min: f64) -> PerFrameCounts {
    let tp = match_pairs(dets, gts, iou_min).len() as u64;
    PerFrameCounts {
        frame_index,
        tp,
        fp: dets.len() as u64 - tp,
        fn_: gts.len() as u64 - tp,
    }
}

/// A ratio rounded half away from zero to three decimals, held in thousandths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Milli(pub u64);

impl Milli {
    /// Exact rounding of `num / den` (both non-negative, `den > 0`).
    pub fn from_ratio(num: u64, den: u64) -> Milli {
        let (num, den) = (num as u128, den as u128);
        Milli(((2000 * num + den) / (2 * den)) as u64)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl fmt::Display for Milli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl std::str::FromStr for Milli {
    type Err = Error;

    /// Accepts `d.ddd` with at most three decimals.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid("metric", format!("`{s}` is not a 3-decimal number"));
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 3 || int.is_empty() {
            return Err(bad());
        }
        let int: u64 = int.parse().map_err(|_| bad())?;
        let frac_val: u64 = if frac.is_empty() {
            0
        } else {
            frac.parse::<u64>().map_err(|_| bad())? * 10u64.pow(3 - frac.len() as u32)
        };
        Ok(Milli(int * 1000 + frac_val))
    }
}

/// Round half away from zero to three decimals.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioId {
    pub height_ft: f64,
    pub azimuth_deg: f64,
    pub band: Band,
    pub direction: String,
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}ft-{}° {}",
            self.band,
            fmt_num(self.height_ft),
            fmt_num(self.azimuth_deg),
            self.direction
        )
    }
}

/// Summed counts and the metrics derived from them. Metrics are `None`
/// when their denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub id: ScenarioId,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricsRecord {
    pub fn from_counts(id: ScenarioId, tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64);
        let recall = (tp + fn_ > 0).then(|| tp as f64 / (tp + fn_) as f64);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        MetricsRecord {
            id,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    /// No counts at all: nothing can be said about this scenario.
    pub fn is_flagged(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn precision_milli(&self) -> Option<Milli> {
        (self.tp + self.fp > 0).then(|| Milli::from_ratio(self.tp, self.tp + self.fp))
    }

    pub fn recall_milli(&self) -> Option<Milli> {
        (self.tp + self.fn_ > 0).then(|| Milli::from_ratio(self.tp, self.tp + self.fn_))
    }

    /// `2pr / (p + r)` reduces to `2TP / (2TP + FP + FN)`, rounded exactly.
    pub fn f1_milli(&self) -> Option<Milli> {
        self.f1
            .map(|_| Milli::from_ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_))
    }
}

/// Sum per-frame counts and derive the metrics.
pub fn aggregate(counts: &[PerFrameCounts], id: ScenarioId) -> MetricsRecord {
    let (tp, fp, fn_) = counts
        .iter()
        .fold((0, 0, 0), |(a, b, c), f| (a + f.tp, b + f.fp, c + f.fn_));
    MetricsRecord::from_counts(id, tp, fp, fn_)
}

/// Per-frame counts for one direction over the sampled frames.
pub fn count_direction(
    log: &DetectionLog,
    truth: &GroundTruthLog,
    direction: &str,
    frames: &[u64],
    iou_min: f64,
) -> Result<Vec<PerFrameCounts>> {
    frames
        .iter()
        .map(|&f| {
            let dets = log
                .frame(f)
                .ok_or_else(|| {
                    Error::invalid("sampling", format!("frame {f} is not in the detection log"))
                })?
                .boxes_for(direction);
            let gts = truth.boxes_for(f, direction);
            Ok(match_frame(f, &dets, &gts, iou_min))
        })
        .collect()
}

/// One record per configured direction of `log`.
pub fn evaluate_log(
    log: &DetectionLog,
    truth: &GroundTruthLog,
    policy: &FrameSamplingPolicy,
    iou_min: f64,
    height_ft: f64,
    azimuth_deg: f64,
) -> Result<Vec<MetricsRecord>> {
    if !(iou_min > 0.0 && iou_min <= 1.0) {
        return Err(Error::invalid("iou_min", format!("{iou_min} is outside (0, 1]")));
    }
    let frames = sample_frames(policy)?;
    log.config
        .directions
        .iter()
        .map(|d| {
            let counts = count_direction(log, truth, d, &frames, iou_min)?;
            Ok(aggregate(
                &counts,
                ScenarioId {
                    height_ft,
                    azimuth_deg,
                    band: log.config.band,
                    direction: d.clone(),
                },
            ))
        })
        .collect()
}

/// One transcribed results-table row: counts and the printed metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureRow {
    pub id: ScenarioId,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub printed: [Milli; 3],
}

const FIELD_RESULTS: &str = include_str!("../data/field_results.csv");

/// Parse `band,height_ft,azimuth_deg,direction,tp,fp,fn,precision,recall,f1` rows.
pub fn parse_fixture(text: &str) -> Result<Vec<FixtureRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || i == 0 && line.starts_with("band") {
            continue;
        }
        let err = |reason: String| Error::Fixture {
            line: line_no,
            reason,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 10 {
            return Err(err(format!("expected 10 columns, found {}", cols.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
        let count = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad count `{s}`")));
        let milli = |s: &str| s.parse::<Milli>().map_err(|e| err(e.to_string()));
        rows.push(FixtureRow {
            id: ScenarioId {
                band: cols[0].parse().map_err(|e: Error| err(e.to_string()))?,
                height_ft: num(cols[1])?,
                azimuth_deg: num(cols[2])?,
                direction: cols[3].to_string(),
            },
            tp: count(cols[4])?,
            fp: count(cols[5])?,
            fn_: count(cols[6])?,
            printed: [milli(cols[7])?, milli(cols[8])?, milli(cols[9])?],
        });
    }
    Ok(rows)
}

/// The 60 rows of the bundled field-results table (30 per band).
pub fn bundled_fixture() -> Vec<FixtureRow> {
    parse_fixture(FIELD_RESULTS).expect("bundled fixture parses")
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureOutcome {
    pub row: FixtureRow,
    pub computed: [Option<Milli>; 3],
    /// Names of the metrics whose printed value disagrees.
    pub mismatches: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureReport {
    pub outcomes: Vec<FixtureOutcome>,
}

impl FixtureReport {
    pub fn inconsistent(&self) -> impl Iterator<Item = &FixtureOutcome> {
        self.outcomes.iter().filter(|o| !o.mismatches.is_empty())
    }

    pub fn consistent_count(&self) -> usize {
        self.outcomes.len() - self.inconsistent().count()
    }

    pub fn records(&self) -> Vec<MetricsRecord> {
        self.outcomes
            .iter()
            .map(|o| MetricsRecord::from_counts(o.row.id.clone(), o.row.tp, o.row.fp, o.row.fn_))
            .collect()
    }
}

/// Recompute every row's metrics from its counts and compare at 3 decimals.
pub fn fixture_check(rows: &[FixtureRow]) -> FixtureReport {
    let outcomes = rows
        .iter()
        .map(|row| {
            let rec = MetricsRecord::from_counts(row.id.clone(), row.tp, row.fp, row.fn_);
            let computed = [rec.precision_milli(), rec.recall_milli(), rec.f1_milli()];
            let mismatches = ["precision", "recall", "f1"]
                .iter()
                .zip(computed.iter().zip(&row.printed))
                .filter(|(_, (c, p))| **c != Some(**p))
                .map(|(name, _)| *name)
                .collect();
            FixtureOutcome {
                row: row.clone(),
                computed,
                mismatches,
            }
        })
        .collect();
    FixtureReport { outcomes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn id() -> ScenarioId {
        ScenarioId {
            height_ft: 50.0,
            azimuth_deg: 45.0,
            band: Band::Rgb,
            direction: "south".into(),
        }
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(0, 0, 10, 10);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &BBox::new(20, 20, 30, 30)), 0.0);
        assert_relative_eq!(iou(&a, &BBox::new(5, 0, 15, 10)), 50.0 / 150.0);
        assert_eq!(iou(&BBox::new(3, 3, 3, 3), &BBox::new(3, 3, 3, 3)), 0.0);
    }

    #[test]
    fn match_examples() {
        let gt = BBox::new(0, 0, 10, 10);
        let c = match_frame(0, &[], &[gt], 0.3);
        assert_eq!((c.tp, c.fp, c.fn_), (0, 0, 1));

        let d = BBox::new(1, 1, 11, 11);
        assert_relative_eq!(iou(&d, &gt), 81.0 / 119.0);
        let c = match_frame(0, &[d], &[gt], 0.3);
        assert_eq!((c.tp, c.fp, c.fn_), (1, 0, 0));

        let c = match_frame(0, &[d, BBox::new(0, 0, 9, 10)], &[gt], 0.3);
        assert_eq!((c.tp, c.fp, c.fn_), (1, 1, 0));
    }

    #[test]
    fn ties_prefer_lower_indices() {
        let gt = [BBox::new(0, 0, 10, 10)];
        let dets = [BBox::new(5, 0, 15, 10), BBox::new(0, 5, 10, 15)];
        assert_eq!(match_pairs(&dets, &gt, 0.3), vec![(0, 0)]);
    }

    #[test]
    fn sampling_examples() {
        let s = sample_frames(&FrameSamplingPolicy::default()).unwrap();
        assert_eq!(s.len(), 101);
        assert_eq!((s[0], s[100]), (200, 700));
        let s = sample_frames(&FrameSamplingPolicy { start: 0, end: 0, step: 5 }).unwrap();
        assert_eq!(s, vec![0]);
        let s = sample_frames(&FrameSamplingPolicy { start: 200, end: 703, step: 5 }).unwrap();
        assert_eq!(*s.last().unwrap(), 700);
        assert!(sample_frames(&FrameSamplingPolicy { start: 5, end: 1, step: 1 }).is_err());
        assert!(sample_frames(&FrameSamplingPolicy { start: 0, end: 1, step: 0 }).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let r = MetricsRecord::from_counts(id(), 20, 5, 1);
        assert_eq!(r.precision_milli().unwrap().to_string(), "0.800");
        assert_eq!(r.recall_milli().unwrap().to_string(), "0.952");
        assert_eq!(r.f1_milli().unwrap().to_string(), "0.870");

        let r = MetricsRecord::from_counts(id(), 148, 0, 0);
        assert_eq!(r.f1_milli(), Some(Milli(1000)));
        assert_eq!(r.f1_milli().unwrap().to_string(), "1.000");

        let frames = [
            PerFrameCounts { frame_index: 0, tp: 2, fp: 1, fn_: 0 },
            PerFrameCounts { frame_index: 5, tp: 3, fp: 0, fn_: 0 },
        ];
        let r = aggregate(&frames, id());
        assert_relative_eq!(r.precision.unwrap(), 5.0 / 6.0);
        assert_eq!(r.precision_milli(), Some(Milli(833)));
    }

    #[test]
    fn undefined_metrics() {
        let r = aggregate(&[], id());
        assert!(r.is_flagged());
        assert_eq!((r.precision, r.recall, r.f1), (None, None, None));
        let r = MetricsRecord::from_counts(id(), 0, 0, 4);
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, Some(0.0));
        assert_eq!(r.f1, None);
        assert!(!r.is_flagged());
        let r = MetricsRecord::from_counts(id(), 0, 3, 4);
        assert_eq!(r.f1, None);
    }

    #[test]
    fn milli_rounding_and_parsing() {
        assert_eq!(Milli::from_ratio(1, 8), Milli(125));
        assert_eq!(Milli::from_ratio(1, 16), Milli(63)); // 0.0625 rounds up
        assert_eq!(Milli::from_ratio(2, 3), Milli(667));
        assert_eq!("0.5".parse::<Milli>().unwrap(), Milli(500));
        assert_eq!("1.000".parse::<Milli>().unwrap(), Milli(1000));
        assert!("0.1234".parse::<Milli>().is_err());
        assert!("x".parse::<Milli>().is_err());
        assert_eq!(round3(0.0625), 0.063);
        assert_eq!(round3(-0.0625), -0.063);
    }

    #[test]
    fn fixture_rows_named() {
        let rows = bundled_fixture();
        assert_eq!(rows.len(), 60);
        let report = fixture_check(&rows);
        let find = |band: Band, h: f64, a: f64, dir: &str| {
            report
                .outcomes
                .iter()
                .find(|o| {
                    o.row.id.band == band
                        && o.row.id.height_ft == h
                        && o.row.id.azimuth_deg == a
                        && o.row.id.direction == dir
                })
                .unwrap()
                .clone()
        };
        let o = find(Band::Rgb, 400.0, 135.0, "south");
        assert_eq!((o.row.tp, o.row.fp, o.row.fn_), (253, 0, 47));
        assert_eq!(o.computed, [Some(Milli(1000)), Some(Milli(843)), Some(Milli(915))]);
        assert!(o.mismatches.is_empty());

        let o = find(Band::Rgb, 300.0, 45.0, "north");
        assert_eq!(o.computed, [Some(Milli(978)), Some(Milli(835)), Some(Milli(901))]);

        let o = find(Band::Ir, 50.0, 45.0, "south");
        assert_eq!((o.row.tp, o.row.fp, o.row.fn_), (91, 0, 160));
        assert_eq!(o.computed, [Some(Milli(1000)), Some(Milli(363)), Some(Milli(532))]);
    }

    #[test]
    fn fixture_reports_disagreement() {
        let text = "band,height_ft,azimuth_deg,direction,tp,fp,fn,precision,recall,f1\n\
                    RGB,50,45,south,20,5,1,0.800,0.952,0.871\n";
        let report = fixture_check(&parse_fixture(text).unwrap());
        assert_eq!(report.inconsistent().count(), 1);
        assert_eq!(report.outcomes[0].mismatches, vec!["f1"]);
        assert!(parse_fixture("RGB,50,45,south,20,5\n").is_err());
    }
}
