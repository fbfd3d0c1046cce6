//! Vehicle detection for fixed-camera aerial traffic video.
//!
//! The detector is a per-pixel Gaussian-mixture background model followed
//! by opening, closing, 8-connected labeling and an area threshold, run
//! separately for each road direction inside a cropped region of interest.
//! Around it sit the drone/sensor scenario geometry, a deterministic
//! synthetic scene generator with exact ground truth, and the
//! precision/recall/F1 evaluation over sampled frames.

// `!(x > 0.0)` is how validation rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbox;
pub mod bgmodel;
pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod maskops;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use bbox::BBox;
pub use bgmodel::{init_model, MixtureModel, MixtureParams};
pub use error::{Error, Result};
pub use eval::{
    aggregate, evaluate_log, fixture_check, iou, match_frame, sample_frames, FrameSamplingPolicy,
    MetricsRecord, Milli, PerFrameCounts, ScenarioId,
};
pub use frame::{GrayFrame, RgbFrame};
pub use geometry::{
    build_roi_mask, expand_grid, expected_vehicle_area_px, required_launch_altitude, slant_range,
    Band, Polygon, RoiSpec, Scenario, ScenarioGeometry, ScenarioGrid,
};
pub use maskops::{
    close, connected_components, dilate, erode, open, regions_to_detections, BinaryMask,
    LabeledRegions, Region, StructuringElement,
};
pub use pipeline::{
    run_sequence, Detection, DetectionLog, FrameDetections, MinArea, Pipeline, PipelineConfig,
};
pub use synth::{generate, occlusion_scene, GroundTruthLog, SceneConfig, SyntheticScene};
