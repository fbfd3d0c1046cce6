//! Shared inputs for the benchmarks.

use aerotraffic_core::synth::HighwayOptions;
use aerotraffic_core::{generate, GrayFrame, RoiSpec, SceneConfig};

/// `count` frames of the default 640x480 highway scene and its ROI.
pub fn highway_frames(count: u64) -> (Vec<GrayFrame>, RoiSpec) {
    let scene = generate(&SceneConfig::highway(&HighwayOptions {
        frame_count: count,
        ..HighwayOptions::default()
    }))
    .expect("preset scene is valid");
    (scene.frames().collect(), scene.roi.clone())
}
