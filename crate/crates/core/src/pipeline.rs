//! End-to-end orchestration: flow, multiscale segmentation, feature maps,
//! temporal smoothing, cross-scale fusion, and dataset-level I/O.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_frame, pr_svg, EvalReport, FrameEval, VideoReport};
use crate::flow::{estimate_flow, flow_magnitude, FlowField};
use crate::frame_io::{
    list_matching, list_videos, load_frame_sequence, load_ground_truth, read_saliency, to_lab,
    write_saliency, Frame, LabFrame, SaliencyMap, FRAMES_DIR, GT_DIR,
};
use crate::low_level::{gabor_energy, GaborBank, GaborResponse};
use crate::low_level::low_level_for_labeling;
use crate::mid_level::{
    background_prior, center_bias_map, mid_level_map, movement, objectness, region_objectness,
    load_objectness, MidLevelScores, ObjectnessMap,
};
use crate::raster::Plane;
use crate::segmentation::{adjacency, default_scale_targets, segment_video, Labeling, MultiscaleLabeling};
use crate::spatiotemporal::{
    combine_spatial, labeling_motion_stats, mca_fuse, rasterize, window_size, MotionStats,
    TemporalHistory,
};

pub const MANIFEST: &str = "manifest.json";
pub const TIMINGS: &str = "timings.json";

/// Luminance plane on a 0..255 scale, the input to flow and texture filters.
pub fn intensity(lab: &LabFrame) -> Plane {
    lab.l.map(|l| l * 2.55)
}

/// `flows[k]` is the flow from frame `k` to frame `k + 1`.
pub fn compute_flows(labs: &[LabFrame], config: &PipelineConfig) -> Vec<FlowField> {
    let planes: Vec<Plane> = labs.par_iter().map(intensity).collect();
    (0..planes.len().saturating_sub(1))
        .into_par_iter()
        .map(|k| {
            let mut f = estimate_flow(&planes[k], &planes[k + 1], &config.flow);
            f.from_index = k;
            f.to_index = k + 1;
            f
        })
        .collect()
}

/// The motion attributed to frame `t`: the flow arriving at it, or the
/// outgoing flow for the first frame.
pub fn frame_flow(flows: &[FlowField], t: usize, width: usize, height: usize) -> FlowField {
    if t >= 1 {
        flows[t - 1].clone()
    } else if let Some(f) = flows.first() {
        f.clone()
    } else {
        FlowField::zeros(width, height, 0, 0)
    }
}

/// Scale targets after applying the level selection.
pub fn scale_targets(config: &PipelineConfig, width: usize, height: usize) -> Vec<usize> {
    let all = if config.scale_targets.is_empty() {
        default_scale_targets(width * height)
    } else {
        config.scale_targets.clone()
    };
    config
        .selected_levels(all.len())
        .into_iter()
        .map(|l| all[l])
        .collect()
}

/// Spatial saliency of every region of one labeling.
pub struct ScaleFrame {
    pub spatial: Vec<f64>,
    pub motion: Vec<MotionStats>,
}

fn spatial_scale(
    labeling: &Labeling,
    lab: &LabFrame,
    texture: Option<&GaborResponse>,
    flow: &FlowField,
    magnitude: &Plane,
    center: &Plane,
    objectness_map: Option<&ObjectnessMap>,
    config: &PipelineConfig,
) -> Result<ScaleFrame> {
    let n = labeling.region_count();
    let lf = match texture {
        Some(g) => low_level_for_labeling(labeling, lab, g, flow, &config.low_level)?.0,
        None => vec![1.0; n],
    };
    let mf = if config.alpha < 1.0 {
        let centers = labeling.region_means(center);
        let obj = match objectness_map {
            Some(m) => region_objectness(labeling, m),
            None => vec![0.0; n],
        };
        let graph = adjacency(labeling, lab);
        let bg = background_prior(&graph, labeling, &config.mid_level);
        let mov = movement(labeling, magnitude);
        let scores: Vec<MidLevelScores> = (0..n)
            .map(|i| MidLevelScores {
                center: centers[i],
                objectness: obj[i],
                background: bg[i],
                movement: mov[i],
            })
            .collect();
        mid_level_map(&scores, &config.mid_level.weights)
    } else {
        vec![1.0; n]
    };
    Ok(ScaleFrame {
        spatial: combine_spatial(&lf, &mf, config.alpha),
        motion: labeling_motion_stats(labeling, magnitude),
    })
}

/// Per-frame, per-scale spatial maps; frames are processed in parallel.
pub fn spatial_maps(
    labs: &[LabFrame],
    flows: &[FlowField],
    segmentation: &MultiscaleLabeling,
    config: &PipelineConfig,
    objectness_maps: Option<&[ObjectnessMap]>,
) -> Result<Vec<Vec<ScaleFrame>>> {
    let (w, h) = (labs[0].width(), labs[0].height());
    let bank = GaborBank::new(config.low_level.gabor.clone());
    let center = center_bias_map(w, h, config.mid_level.sigma_cen);
    let need_objectness = config.alpha < 1.0 && config.mid_level.weights[1] > 0.0;
    (0..labs.len())
        .into_par_iter()
        .map(|t| {
            let lab = &labs[t];
            let flow = frame_flow(flows, t, w, h);
            let magnitude = flow_magnitude(&flow);
            let texture = (config.alpha > 0.0).then(|| gabor_energy(&intensity(lab), &bank));
            let obj = match objectness_maps {
                Some(maps) => Some(maps[t].clone()),
                None => need_objectness
                    .then(|| objectness(lab, &segmentation.scales[0][t], &config.mid_level.objectness)),
            };
            segmentation
                .scales
                .iter()
                .map(|scale| {
                    spatial_scale(
                        &scale[t],
                        lab,
                        texture.as_ref(),
                        &flow,
                        &magnitude,
                        &center,
                        obj.as_ref(),
                        config,
                    )
                })
                .collect()
        })
        .collect()
}

/// Adaptive temporal smoothing along tracks, one scale at a time.
pub fn temporal_smoothing(
    spatial: &[Vec<ScaleFrame>],
    segmentation: &MultiscaleLabeling,
    config: &PipelineConfig,
) -> Vec<Vec<Vec<f64>>> {
    let levels = segmentation.levels();
    let mut out: Vec<Vec<Vec<f64>>> = spatial
        .iter()
        .map(|frame| frame.iter().map(|s| s.spatial.clone()).collect())
        .collect();
    if !config.atw_enabled {
        return out;
    }
    for l in 0..levels {
        let mut history = TemporalHistory::new(config.atw.max_window);
        for (t, frame) in spatial.iter().enumerate() {
            let labeling = &segmentation.scales[l][t];
            let tracks: Vec<u64> = labeling.regions.iter().map(|r| r.track_id).collect();
            let scale = &frame[l];
            history.push(t, &tracks, &scale.spatial);
            let windows: Vec<usize> = scale
                .motion
                .iter()
                .map(|m| window_size(m.mu, m.beta, t, &config.atw))
                .collect();
            out[t][l] = history.smooth(t, &tracks, &windows, config.atw.sigma_tpdst);
        }
    }
    out
}

/// Fuses the per-scale maps of one frame.
pub fn fuse_scales(maps: &[SaliencyMap], config: &PipelineConfig) -> Result<SaliencyMap> {
    match maps {
        [] => Err(Error::TooFewMaps(0)),
        [single] => Ok(single.clone()),
        _ if config.mca_enabled => mca_fuse(maps, &config.mca),
        _ => {
            let mut sum = Plane::new(maps[0].width(), maps[0].height(), 0.0);
            for m in maps {
                for (s, v) in sum.data_mut().iter_mut().zip(m.data()) {
                    *s += v;
                }
            }
            let n = maps.len() as f64;
            Ok(sum.map(|v| v / n))
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct StageTimings {
    pub load_ms: f64,
    pub flow_ms: f64,
    pub segmentation_ms: f64,
    pub spatial_ms: f64,
    pub temporal_ms: f64,
    pub fusion_ms: f64,
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Runs the whole pipeline on decoded frames and returns one map per frame.
pub fn process_frames(frames: &[Frame], config: &PipelineConfig) -> Result<Vec<SaliencyMap>> {
    process_frames_timed(frames, config, None, &mut StageTimings::default())
}

/// Loads `<dir>/<stem>.png` for every frame.
pub fn load_objectness_maps(dir: &Path, frames: &[Frame]) -> Result<Vec<ObjectnessMap>> {
    frames
        .iter()
        .map(|f| {
            let map = load_objectness(&dir.join(format!("{}.png", f.name)))?;
            if (map.values.width(), map.values.height()) != (f.width, f.height) {
                return Err(Error::MapMismatch(f.width, f.height, map.values.width(), map.values.height()));
            }
            Ok(map)
        })
        .collect()
}

pub fn process_frames_timed(
    frames: &[Frame],
    config: &PipelineConfig,
    objectness_dir: Option<&Path>,
    timings: &mut StageTimings,
) -> Result<Vec<SaliencyMap>> {
    config.validate()?;
    if frames.is_empty() {
        return Ok(Vec::new());
    }
    let start = Instant::now();
    let labs: Vec<LabFrame> = frames.par_iter().map(to_lab).collect();
    let (w, h) = (labs[0].width(), labs[0].height());
    timings.load_ms += elapsed_ms(start);

    let start = Instant::now();
    let flows = compute_flows(&labs, config);
    timings.flow_ms = elapsed_ms(start);

    let start = Instant::now();
    let targets = scale_targets(config, w, h);
    let segmentation = segment_video(&labs, &flows, &targets, &config.slic)?;
    timings.segmentation_ms = elapsed_ms(start);

    let start = Instant::now();
    let loaded = objectness_dir
        .map(|dir| load_objectness_maps(dir, frames))
        .transpose()?;
    let spatial = spatial_maps(&labs, &flows, &segmentation, config, loaded.as_deref())?;
    timings.spatial_ms = elapsed_ms(start);

    let start = Instant::now();
    let smoothed = temporal_smoothing(&spatial, &segmentation, config);
    timings.temporal_ms = elapsed_ms(start);

    let start = Instant::now();
    let maps = smoothed
        .par_iter()
        .enumerate()
        .map(|(t, values)| {
            let per_scale: Vec<SaliencyMap> = values
                .iter()
                .enumerate()
                .map(|(l, v)| rasterize(v, &segmentation.scales[l][t]))
                .collect();
            fuse_scales(&per_scale, config)
        })
        .collect::<Result<Vec<_>>>()?;
    timings.fusion_ms = elapsed_ms(start);
    Ok(maps)
}

/// Video directories under `root`, or `root` itself if it holds `frames/`.
pub fn dataset_videos(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(FRAMES_DIR).is_dir() {
        return Ok(vec![root.to_path_buf()]);
    }
    list_videos(root)
}

fn video_name(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "video".to_string())
}

#[derive(Clone, Debug, Serialize)]
pub struct VideoOutcome {
    pub name: String,
    pub frames: usize,
    pub error: Option<String>,
    #[serde(skip)]
    pub timings: StageTimings,
}

impl VideoOutcome {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Processes one video directory and writes `<out>/<stem>.png` per frame.
pub fn run_video(video_dir: &Path, out_dir: &Path, config: &PipelineConfig) -> VideoOutcome {
    let name = video_name(video_dir);
    let mut timings = StageTimings::default();
    let result = (|| -> Result<usize> {
        let start = Instant::now();
        let frames = load_frame_sequence(&video_dir.join(FRAMES_DIR), &config.frame_pattern)?;
        timings.load_ms = elapsed_ms(start);
        let objectness_dir = config.objectness_dir.as_ref().map(|dir| {
            let per_video = dir.join(&name);
            if per_video.is_dir() {
                per_video
            } else {
                dir.clone()
            }
        });
        let maps = process_frames_timed(&frames, config, objectness_dir.as_deref(), &mut timings)?;
        for (frame, map) in frames.iter().zip(&maps) {
            write_saliency(map, &out_dir.join(format!("{}.png", frame.name)))?;
        }
        Ok(frames.len())
    })();
    match result {
        Ok(frames) => VideoOutcome {
            name,
            frames,
            error: None,
            timings,
        },
        Err(e) => {
            log::error!("video {name}: {e}");
            VideoOutcome {
                name,
                frames: 0,
                error: Some(e.to_string()),
                timings,
            }
        }
    }
}

/// Runs every video of a dataset in parallel; writes maps, `manifest.json`
/// (deterministic) and `timings.json`.
pub fn run_dataset(dataset_root: &Path, output_root: &Path, config: &PipelineConfig) -> Result<Vec<VideoOutcome>> {
    config.validate()?;
    let videos = dataset_videos(dataset_root)?;
    if videos.is_empty() {
        return Err(Error::NoFrames(dataset_root.to_path_buf()));
    }
    std::fs::create_dir_all(output_root).map_err(|e| Error::io(output_root, e))?;
    let outcomes: Vec<VideoOutcome> = videos
        .par_iter()
        .map(|dir| run_video(dir, &output_root.join(video_name(dir)), config))
        .collect();

    let manifest = json!({
        "config_hash": config.hash(),
        "config": Value::Object(config.to_flat()),
        "videos": outcomes,
    });
    write_json(&output_root.join(MANIFEST), &manifest)?;
    let timings: BTreeMap<&str, &StageTimings> =
        outcomes.iter().map(|o| (o.name.as_str(), &o.timings)).collect();
    write_json(&output_root.join(TIMINGS), &timings)?;
    Ok(outcomes)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn stems(dir: &Path, pattern: &str) -> Result<Vec<String>> {
    Ok(list_matching(dir, pattern)?
        .iter()
        .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        .collect())
}

/// Scores the maps under `maps_root/<video>/<stem>.png` against the dataset's
/// ground truth. Videos without any annotation are skipped.
pub fn evaluate_dataset(maps_root: &Path, dataset_root: &Path, pattern: &str) -> Result<EvalReport> {
    let mut reports = Vec::new();
    for dir in dataset_videos(dataset_root)? {
        let name = video_name(&dir);
        let stems = stems(&dir.join(FRAMES_DIR), pattern)?;
        let gt = load_ground_truth(&dir.join(GT_DIR), &stems)?;
        let map_dir = if maps_root.join(&name).is_dir() {
            maps_root.join(&name)
        } else {
            maps_root.to_path_buf()
        };
        let frames = stems
            .par_iter()
            .zip(gt.par_iter())
            .filter_map(|(stem, gt)| gt.as_ref().map(|g| (stem, g)))
            .map(|(stem, g)| -> Result<FrameEval> {
                let path = map_dir.join(format!("{stem}.png"));
                if !path.is_file() {
                    return Err(Error::MissingMap(path));
                }
                evaluate_frame(&read_saliency(&path)?, g)
            })
            .collect::<Result<Vec<_>>>()?;
        if frames.is_empty() {
            log::warn!("video {name} has no annotated frames, skipped");
            continue;
        }
        reports.push(VideoReport::from_frames(name, &frames)?);
    }
    EvalReport::from_videos(reports)
}

/// Writes `pr.csv`, `pr.svg` and `summary.json` into `out_dir`.
pub fn write_eval_outputs(report: &EvalReport, out_dir: &Path, label: &str) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    report.write_csv(&out_dir.join("pr.csv"))?;
    let svg = pr_svg(&[(label.to_string(), report.pr_curve.clone())]);
    let path = out_dir.join("pr.svg");
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    let per_video: Vec<Value> = report
        .per_video
        .iter()
        .map(|v| {
            json!({
                "name": v.name,
                "frames": v.frames,
                "scored_frames": v.scored_frames,
                "f_adap": v.f_adap,
                "f_max": v.f_max,
                "mae": v.mae,
            })
        })
        .collect();
    write_json(
        &out_dir.join("summary.json"),
        &json!({
            "f_adap": report.f_adap,
            "f_max": report.f_max,
            "mae": report.mae,
            "per_video": per_video,
        }),
    )
}

/// Writes `<out>/flow_NNNN.flo` for every consecutive frame pair.
pub fn dump_flow(video_dir: &Path, out_dir: &Path, config: &PipelineConfig) -> Result<usize> {
    let frames = load_frame_sequence(&video_dir.join(FRAMES_DIR), &config.frame_pattern)?;
    let labs: Vec<LabFrame> = frames.par_iter().map(to_lab).collect();
    let flows = compute_flows(&labs, config);
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (k, f) in flows.iter().enumerate() {
        f.write_flo(&out_dir.join(format!("flow_{k:04}.flo")))?;
    }
    Ok(flows.len())
}

/// Writes `<out>/scale<L>/<stem>.png` label maps and `<stem>.csv` region tables.
pub fn dump_segmentation(video_dir: &Path, out_dir: &Path, config: &PipelineConfig) -> Result<usize> {
    config.validate()?;
    let frames = load_frame_sequence(&video_dir.join(FRAMES_DIR), &config.frame_pattern)?;
    let labs: Vec<LabFrame> = frames.par_iter().map(to_lab).collect();
    let flows = compute_flows(&labs, config);
    let targets = scale_targets(config, labs[0].width(), labs[0].height());
    let segmentation = segment_video(&labs, &flows, &targets, &config.slic)?;
    for (l, scale) in segmentation.scales.iter().enumerate() {
        let dir = out_dir.join(format!("scale{}", l + 1));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (frame, labeling) in frames.iter().zip(scale) {
            labeling.write_label_png(&dir.join(format!("{}.png", frame.name)))?;
            labeling.write_region_csv(&dir.join(format!("{}.csv", frame.name)))?;
        }
    }
    Ok(frames.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray_frames(n: usize, w: usize, h: usize, v: u8) -> Vec<Frame> {
        (0..n)
            .map(|i| Frame::from_rgb(i, format!("{i:04}"), w, h, vec![v; w * h * 3]))
            .collect()
    }

    #[test]
    fn uniform_video_has_no_saliency() {
        let maps = process_frames(&gray_frames(2, 40, 30, 128), &PipelineConfig::default()).unwrap();
        assert_eq!(maps.len(), 2);
        for m in &maps {
            assert!(m.data().iter().all(|&v| v < 0.5 / 255.0), "max {}", m.min_max().1);
        }
    }

    #[test]
    fn frame_flow_indexing() {
        let flows = vec![FlowField::uniform(2, 2, 1.0, 0.0), FlowField::uniform(2, 2, 2.0, 0.0)];
        assert_eq!(frame_flow(&flows, 0, 2, 2).u.get(0, 0), 1.0);
        assert_eq!(frame_flow(&flows, 1, 2, 2).u.get(0, 0), 1.0);
        assert_eq!(frame_flow(&flows, 2, 2, 2).u.get(0, 0), 2.0);
        assert_eq!(frame_flow(&[], 0, 2, 2).u.get(0, 0), 0.0);
    }

    #[test]
    fn fuse_without_mca_averages() {
        let a = Plane::new(2, 1, 0.2);
        let b = Plane::new(2, 1, 0.6);
        let config = PipelineConfig {
            mca_enabled: false,
            ..PipelineConfig::default()
        };
        let fused = fuse_scales(&[a.clone(), b], &config).unwrap();
        assert!((fused.get(0, 0) - 0.4).abs() < 1e-12);
        assert_eq!(fuse_scales(&[a.clone()], &PipelineConfig::default()).unwrap(), a);
    }
}
