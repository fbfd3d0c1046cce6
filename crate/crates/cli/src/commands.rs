//! Subcommand implementations. Each one prints a single JSON summary line
//! to `out` on success.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use aerotraffic_core::eval::{bundled_fixture, parse_fixture};
use aerotraffic_core::pipeline::{finish, measure_throughput, MinArea};
use aerotraffic_core::synth::HighwayOptions;
use aerotraffic_core::{
    evaluate_log, fixture_check, generate, occlusion_scene, sample_frames, Band, DetectionLog,
    FrameSamplingPolicy, GrayFrame, GroundTruthLog, MetricsRecord, Pipeline, PipelineConfig,
    RgbFrame, RoiSpec, SceneConfig, SyntheticScene,
};
use serde_json::json;

use crate::annotate::annotate_frames;
use crate::annotations::AnnotationFile;
use crate::app::{
    BenchArgs, Cli, Command, DetectArgs, EvalArgs, FixtureArgs, ReportArgs, RunArgs, SamplingArgs,
    SynthArgs,
};
use crate::config::{parse_config, whole_frame_roi, InputSource, RunConfig, SynthSource};
use crate::error::{CliError, CliResult};
use crate::frames::{load_frames, write_frames, FrameSource, Raster};
use crate::metrics_csv::{read_metrics_file, write_metrics, write_metrics_file};
use crate::svg::{render_chart, ChartMetric};

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let summary = match cli.command {
        Command::Synth(a) => synth(&a)?,
        Command::Detect(a) => detect(&a)?,
        Command::Eval(a) => eval(&a, out)?,
        Command::Report(a) => report(&a)?,
        Command::FixtureCheck(a) => fixture(&a)?,
        Command::Bench(a) => bench(&a)?,
        Command::Run(a) => run(&a)?,
    };
    if let Some(s) = summary {
        writeln!(out, "{s}").map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    }
    Ok(())
}

type Summary = Option<serde_json::Value>;

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn to_json_pretty<T: serde::Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

fn policy(s: &SamplingArgs) -> FrameSamplingPolicy {
    FrameSamplingPolicy {
        start: s.sample_start,
        end: s.sample_end,
        step: s.sample_step,
    }
}

/// Scene description in JSON, or TOML when the extension says so.
pub fn read_scene_file(path: &Path) -> CliResult<SceneConfig> {
    let text = read_text(path)?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0);
            CliError::format(path, line, e.message())
        })
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.line(), e.to_string()))
    }
}

fn read_roi_file(path: &Path) -> CliResult<RoiSpec> {
    let text = read_text(path)?;
    let roi: RoiSpec =
        serde_json::from_str(&text).map_err(|e| CliError::format(path, e.line(), e.to_string()))?;
    roi.validate()?;
    Ok(roi)
}

/// Run the detector over every frame of `frames`.
pub fn detect_source(config: PipelineConfig, frames: &dyn FrameSource) -> CliResult<DetectionLog> {
    let color = config.color_mode;
    let mut pipeline = Pipeline::new(config)?;
    let mut out = Vec::with_capacity(frames.frame_count());
    for i in 0..frames.frame_count() {
        let raster = frames.read_frame(i)?;
        let fd = match (color, raster) {
            (true, Raster::Rgb(f)) => pipeline.process_rgb_frame(&f)?,
            (true, Raster::Gray(g)) => pipeline.process_rgb_frame(&RgbFrame::from(&g))?,
            (false, r) => pipeline.process_frame(&r.into_gray())?,
        };
        out.push(fd);
    }
    Ok(finish(pipeline, out)?)
}

fn sampled_within(policy: &FrameSamplingPolicy, len: usize) -> CliResult<Vec<u64>> {
    Ok(sample_frames(policy)?
        .into_iter()
        .filter(|&i| (i as usize) < len)
        .collect())
}

fn synth(a: &SynthArgs) -> CliResult<Summary> {
    let mut cfg = match &a.scene {
        Some(p) => read_scene_file(p)?,
        None => SceneConfig::highway(&HighwayOptions {
            width: a.width,
            height: a.height,
            frame_count: a.frames,
            seed: a.seed,
            band: a.band,
            ..HighwayOptions::default()
        }),
    };
    if let Some(f) = a.occlusion {
        cfg = occlusion_scene(&cfg, f)?;
    }
    let scene = generate(&cfg)?;
    create_dir(&a.out)?;
    let n = write_frames(&a.out.join("frames"), scene.frames())?;
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    AnnotationFile::from_ground_truth(&scene.ground_truth, w, h)
        .write(&a.out.join("ground_truth.jsonl"))?;
    write_text(&a.out.join("scene.json"), &to_json_pretty(&cfg))?;
    write_text(&a.out.join("roi.json"), &to_json_pretty(&scene.roi))?;
    Ok(Some(json!({
        "frames": n,
        "width": w,
        "height": h,
        "vehicles": cfg.vehicles.len(),
        "out": a.out,
    })))
}

fn detect(a: &DetectArgs) -> CliResult<Summary> {
    let frames = load_frames(&a.frames)?;
    let (w, h) = frames.dims();
    let rc = a.config.as_ref().map(|p| read_text(p).and_then(|t| parse_config(&t))).transpose()?;

    let scenario = rc.as_ref().and_then(|c| c.scenarios.first().copied());
    if rc.as_ref().is_some_and(|c| c.scenarios.len() > 1) {
        return Err(CliError::config(
            "scenario",
            "detect runs one scenario; use `run` for a grid",
        ));
    }
    let band = a.band.or(scenario.map(|s| s.band)).unwrap_or(Band::Rgb);
    let roi = match (&a.roi, &rc) {
        (Some(p), _) => read_roi_file(p)?,
        (None, Some(c)) => c
            .roi
            .clone()
            .unwrap_or_else(|| whole_frame_roi(w, h, c.cutoff_fraction)),
        (None, None) => whole_frame_roi(w, h, aerotraffic_core::geometry::DEFAULT_CUTOFF_FRACTION),
    };
    let detector = rc.as_ref().map(|c| c.detector.clone()).unwrap_or_default();
    let mut pc = detector.pipeline_config(roi, band, scenario.map(|s| s.geometry))?;
    if let Some(t) = a.threshold {
        pc.mixture.classify_threshold_sq = t;
        pc.validate()?;
    }

    let log = detect_source(pc, &frames)?;
    AnnotationFile::from_detections(&log).write(&a.out)?;

    let mut annotated = 0;
    if let Some(dir) = &a.annotate {
        let truth = a
            .truth
            .as_ref()
            .map(|p| AnnotationFile::read(p)?.to_ground_truth(p))
            .transpose()?;
        let indices: Vec<u64> = if a.annotate_all {
            (0..frames.len() as u64).collect()
        } else {
            sampled_within(&policy(&a.sampling), frames.len())?
        };
        annotated = annotate_frames(&frames, &log, truth.as_ref(), &indices, dir)?;
    }
    Ok(Some(json!({
        "frames": log.frames.len(),
        "detections": log.detection_count(),
        "annotated": annotated,
        "out": a.out,
    })))
}

fn check_truth_covers(truth: &GroundTruthLog, policy: &FrameSamplingPolicy, path: &Path) -> CliResult<()> {
    let last = sample_frames(policy)?.last().copied().unwrap_or(0);
    if truth.frame(last).is_none() {
        return Err(CliError::config(
            "sample_end",
            format!(
                "sampled frame {last} is not covered by {} ({} frames)",
                path.display(),
                truth.frames.len()
            ),
        ));
    }
    Ok(())
}

fn eval(a: &EvalArgs, out: &mut dyn Write) -> CliResult<Summary> {
    let log = AnnotationFile::read(&a.detections)?.to_detection_log(&a.detections)?;
    let truth = AnnotationFile::read(&a.truth)?.to_ground_truth(&a.truth)?;
    let policy = policy(&a.sampling);
    check_truth_covers(&truth, &policy, &a.truth)?;
    let records = evaluate_log(&log, &truth, &policy, a.iou_min, a.height_ft, a.azimuth_deg)?;
    match &a.out {
        Some(p) => {
            write_metrics_file(p, &records)?;
            Ok(Some(json!({ "records": records.len(), "out": p })))
        }
        None => {
            write_metrics(&mut *out, &records).map_err(|e| CliError::Format {
                path: PathBuf::from("<stdout>"),
                line: 0,
                message: e.to_string(),
            })?;
            Ok(None)
        }
    }
}

fn report(a: &ReportArgs) -> CliResult<Summary> {
    let records = read_metrics_file(&a.csv)?;
    if records.is_empty() {
        return Err(CliError::format(&a.csv, 1, "no metric rows to chart"));
    }
    write_text(&a.out, &render_chart(&records, a.metric))?;
    Ok(Some(json!({ "records": records.len(), "out": a.out })))
}

fn fixture(a: &FixtureArgs) -> CliResult<Summary> {
    let rows = match &a.file {
        Some(p) => parse_fixture(&read_text(p)?)?,
        None => bundled_fixture(),
    };
    let report = fixture_check(&rows);
    if let Some(p) = &a.csv {
        write_metrics_file(p, &report.records())?;
    }
    let inconsistent: Vec<_> = report
        .inconsistent()
        .map(|o| json!({ "scenario": o.row.id.to_string(), "mismatches": o.mismatches }))
        .collect();
    Ok(Some(json!({
        "rows": report.outcomes.len(),
        "consistent": report.consistent_count(),
        "inconsistent": inconsistent,
    })))
}

fn bench(a: &BenchArgs) -> CliResult<Summary> {
    let frames: Vec<GrayFrame> = match &a.frames_dir {
        Some(dir) => {
            let fd = load_frames(dir)?;
            let n = fd.len().min(a.frames as usize + 1);
            (0..n).map(|i| fd.read(i).map(Raster::into_gray)).collect::<CliResult<_>>()?
        }
        None => {
            let cfg = SceneConfig::highway(&HighwayOptions {
                width: a.width,
                height: a.height,
                frame_count: a.frames + 1,
                seed: a.seed,
                ..HighwayOptions::default()
            });
            generate(&cfg)?.frames().collect()
        }
    };
    let (w, h) = frames
        .first()
        .map(|f| (f.width(), f.height()))
        .ok_or(aerotraffic_core::Error::Empty("frame sequence"))?;
    let roi = match &a.frames_dir {
        Some(_) => whole_frame_roi(w, h, aerotraffic_core::geometry::DEFAULT_CUTOFF_FRACTION),
        None => SceneConfig::highway(&HighwayOptions {
            width: a.width,
            height: a.height,
            ..HighwayOptions::default()
        })
        .roi(),
    };
    let mut pc = PipelineConfig::new(roi, Band::Rgb);
    pc.parallel = a.parallel;
    let t = measure_throughput(pc, &frames)?;
    if let Some(min) = a.min_fps {
        if t.frames_per_second < min {
            return Err(CliError::Threshold {
                message: format!(
                    "throughput {:.1} frames/s is below the required {min}",
                    t.frames_per_second
                ),
            });
        }
    }
    Ok(Some(json!({
        "frames": t.frames,
        "width": w,
        "height": h,
        "seconds": t.seconds,
        "frames_per_second": t.frames_per_second,
    })))
}

/// Config with geometry folded into a fixed area threshold; two scenarios
/// with equal keys produce identical detections.
fn detection_key(pc: &PipelineConfig) -> CliResult<PipelineConfig> {
    let mut k = pc.clone();
    k.min_area = MinArea::Fixed(pc.resolved_min_area()?);
    k.geometry = None;
    k.parallel = false;
    Ok(k)
}

enum Frames {
    Dir(crate::frames::FrameDir),
    Scene(Box<SyntheticScene>),
}

impl Frames {
    fn source(&self) -> &dyn FrameSource {
        match self {
            Frames::Dir(d) => d,
            Frames::Scene(s) => s.as_ref(),
        }
    }

    fn truth(&self) -> Option<&GroundTruthLog> {
        match self {
            Frames::Dir(_) => None,
            Frames::Scene(s) => Some(&s.ground_truth),
        }
    }

    fn roi(&self, rc: &RunConfig) -> RoiSpec {
        if let Some(r) = &rc.roi {
            return r.clone();
        }
        match self {
            Frames::Dir(d) => {
                let (w, h) = d.dims();
                whole_frame_roi(w, h, rc.cutoff_fraction)
            }
            Frames::Scene(s) => s.roi.clone(),
        }
    }
}

fn run(a: &RunArgs) -> CliResult<Summary> {
    let rc = parse_config(&read_text(&a.config)?)?;
    let base = a
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out_dir = match (&a.out, &rc.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => base.join(o),
        (None, None) => return Err(CliError::config("output_dir", "not set and no --out given")),
    };
    create_dir(&out_dir)?;

    // one source per band: a synthetic preset differs by band, files do not
    let mut sources: BTreeMap<Band, Frames> = BTreeMap::new();
    let mut file_truth: Option<GroundTruthLog> = None;
    let mut logs: Vec<(PipelineConfig, DetectionLog)> = Vec::new();
    let mut records: Vec<MetricsRecord> = Vec::new();

    for s in &rc.scenarios {
        if let std::collections::btree_map::Entry::Vacant(slot) = sources.entry(s.band) {
            let src = match &rc.input {
                InputSource::Frames { dir, truth } => {
                    if let Some(t) = truth {
                        let p = base.join(t);
                        file_truth = Some(AnnotationFile::read(&p)?.to_ground_truth(&p)?);
                    }
                    Frames::Dir(load_frames(&base.join(dir))?)
                }
                InputSource::Synth(SynthSource::Highway(opts)) => {
                    let cfg = SceneConfig::highway(&HighwayOptions {
                        band: s.band,
                        ..opts.clone()
                    });
                    Frames::Scene(Box::new(generate(&cfg)?))
                }
                InputSource::Synth(SynthSource::SceneFile(p)) => {
                    Frames::Scene(Box::new(generate(&read_scene_file(&base.join(p))?)?))
                }
            };
            slot.insert(src);
        }
        let src = &sources[&s.band];
        let pc = rc
            .detector
            .pipeline_config(src.roi(&rc), s.band, Some(s.geometry))?;
        let key = detection_key(&pc)?;
        let log = match logs.iter().find(|(k, _)| *k == key) {
            Some((_, l)) => DetectionLog {
                config: pc,
                ..l.clone()
            },
            None => {
                let l = detect_source(pc, src.source())?;
                logs.push((key, l.clone()));
                l
            }
        };

        let dir = out_dir.join(s.label());
        create_dir(&dir)?;
        AnnotationFile::from_detections(&log).write(&dir.join("detections.jsonl"))?;
        let truth = src.truth().or(file_truth.as_ref());
        if let (Some(t), Frames::Scene(_)) = (truth, src) {
            AnnotationFile::from_ground_truth(t, log.width, log.height)
                .write(&dir.join("ground_truth.jsonl"))?;
        }
        if rc.emit.annotated_frames {
            let indices = sampled_within(&rc.sampling, src.source().frame_count())?;
            annotate_frames(src.source(), &log, truth, &indices, &dir.join("annotated"))?;
        }
        if let Some(t) = truth {
            let g = &s.geometry;
            records.extend(evaluate_log(
                &log,
                t,
                &rc.sampling,
                rc.iou_min,
                g.height_above_road,
                g.azimuth_deg,
            )?);
        }
    }

    let mut written = Vec::new();
    if !records.is_empty() {
        if rc.emit.csv {
            let p = out_dir.join("metrics.csv");
            write_metrics_file(&p, &records)?;
            written.push(p);
        }
        if rc.emit.svg {
            for (name, m) in [("f1.svg", ChartMetric::F1), ("recall.svg", ChartMetric::Recall)] {
                let p = out_dir.join(name);
                write_text(&p, &render_chart(&records, m))?;
                written.push(p);
            }
        }
    }
    Ok(Some(json!({
        "scenarios": rc.scenarios.len(),
        "records": records.len(),
        "written": written,
        "out": out_dir,
    })))
}
