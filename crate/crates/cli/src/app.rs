//! Argument definitions for the `aerotraffic` binary.

use std::path::PathBuf;

use aerotraffic_core::Band;
use clap::{Args, Parser, Subcommand};

use crate::svg::ChartMetric;

#[derive(Debug, Parser)]
#[command(name = "aerotraffic", version, about = "Vehicle detection for fixed-camera aerial traffic video")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic scene: frames, ground truth and ROI.
    Synth(SynthArgs),
    /// Run the detector over a frame directory.
    Detect(DetectArgs),
    /// Score detections against ground truth into a metrics CSV.
    Eval(EvalArgs),
    /// Draw grouped bar charts from a metrics CSV.
    Report(ReportArgs),
    /// Recompute the bundled results table from its counts.
    FixtureCheck(FixtureArgs),
    /// Measure end-to-end detector throughput.
    Bench(BenchArgs),
    /// Detect and evaluate every scenario of a run configuration.
    Run(RunArgs),
}

fn parse_band(s: &str) -> Result<Band, String> {
    s.parse::<Band>().map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    /// First sampled frame.
    #[arg(long, default_value_t = 200)]
    pub sample_start: u64,
    /// Last sampled frame (inclusive).
    #[arg(long, default_value_t = 700)]
    pub sample_end: u64,
    #[arg(long, default_value_t = 5)]
    pub sample_step: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Scene description (JSON or TOML). Without it the highway preset is used.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, value_parser = parse_band, default_value = "RGB")]
    pub band: Band,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    #[arg(long, default_value_t = 750)]
    pub frames: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Merge the first same-direction vehicle pair with this row overlap in [0, 1).
    #[arg(long)]
    pub occlusion: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Directory of numbered frames.
    #[arg(long)]
    pub frames: PathBuf,
    /// Detection log to write (JSON lines).
    #[arg(long, short)]
    pub out: PathBuf,
    /// Run configuration supplying detector, ROI and scenario settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// ROI description (JSON) as written by `synth`.
    #[arg(long)]
    pub roi: Option<PathBuf>,
    #[arg(long, value_parser = parse_band)]
    pub band: Option<Band>,
    /// Override the background classification threshold (squared distance).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Write annotated frames here.
    #[arg(long)]
    pub annotate: Option<PathBuf>,
    /// Ground truth to overlay on annotated frames.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Annotate every frame rather than the sampled ones.
    #[arg(long)]
    pub annotate_all: bool,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub detections: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Metrics CSV to write; stdout when absent.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 0.3)]
    pub iou_min: f64,
    /// Scenario height recorded in the table.
    #[arg(long, default_value_t = 0.0)]
    pub height_ft: f64,
    /// Scenario azimuth recorded in the table.
    #[arg(long, default_value_t = 0.0)]
    pub azimuth_deg: f64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub csv: PathBuf,
    /// SVG file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "f1")]
    pub metric: ChartMetric,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    /// Table to check instead of the bundled one.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Also write the recomputed table as a metrics CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Frames to time (after the seeding frame).
    #[arg(long, default_value_t = 300)]
    pub frames: u64,
    #[arg(long, default_value_t = 640)]
    pub width: u32,
    #[arg(long, default_value_t = 480)]
    pub height: u32,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Time a frame directory instead of a synthetic scene.
    #[arg(long)]
    pub frames_dir: Option<PathBuf>,
    /// Split the background update across threads.
    #[arg(long)]
    pub parallel: bool,
    /// Fail when throughput falls below this many frames per second.
    #[arg(long)]
    pub min_fps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
