mod common;

use saliency::config::PipelineConfig;
use saliency::frame_io::to_lab;
use saliency::pipeline::compute_flows;
use saliency::segmentation::{default_scale_targets, segment_video, slic_segment, SlicParams};
use saliency::synth::{generate, SynthKind, SynthSpec};
use saliency::frame_io::Frame;

#[test]
fn random_frames_partition_into_connected_regions() {
    let params = SlicParams::default();
    for seed in 0..6 {
        let frame = to_lab(&common::random_frame(0, 96, 72, seed));
        for k in default_scale_targets(96 * 72) {
            let lab = slic_segment(&frame, k, &params, None).unwrap();
            assert_eq!(common::partition_violation(&lab), None, "seed {seed} k {k}");
        }
    }
}

#[test]
fn fragments_enclosed_by_orphans_are_still_merged() {
    // this frame once left a cluster split in two at the coarsest target
    let frame = to_lab(&common::random_frame(0, 120, 90, 111));
    let lab = slic_segment(&frame, 9, &SlicParams::default(), None).unwrap();
    assert_eq!(common::partition_violation(&lab), None);
}

#[test]
fn region_counts_track_targets_on_textured_frame() {
    let frame = to_lab(&common::random_frame(0, 180, 144, 42));
    for k in [400usize, 200, 100] {
        let lab = slic_segment(&frame, k, &SlicParams::default(), None).unwrap();
        let drift = (lab.region_count() as f64 - k as f64).abs() / k as f64;
        assert!(drift <= 0.2, "target {k}: {} regions", lab.region_count());
    }
}

fn persistence(frames: &[Frame]) -> Vec<f64> {
    let labs: Vec<_> = frames.iter().map(to_lab).collect();
    let flows = compute_flows(&labs, &PipelineConfig::default());
    let (w, h) = (labs[0].width(), labs[0].height());
    let ms = segment_video(&labs, &flows, &default_scale_targets(w * h), &SlicParams::default()).unwrap();
    ms.scales
        .iter()
        .map(|scale| {
            let track = |t: usize, p: usize| scale[t].regions[scale[t].labels[p] as usize].track_id;
            let mut same = 0usize;
            for t in 1..scale.len() {
                same += (0..w * h).filter(|&p| track(t, p) == track(t - 1, p)).count();
            }
            same as f64 / ((scale.len() - 1) * w * h) as f64
        })
        .collect()
}

#[test]
fn static_video_keeps_tracks() {
    let video = generate(&SynthSpec::new(SynthKind::StaticBlob, 8, 96, 72, 3)).unwrap();
    let frames: Vec<Frame> = video
        .frames
        .iter()
        .enumerate()
        .map(|(i, img)| Frame::from_rgb(i, format!("{i}"), 96, 72, img.as_raw().clone()))
        .collect();
    for (l, p) in persistence(&frames).into_iter().enumerate() {
        assert!(p >= 0.95, "scale {l}: {p}");
    }
}

#[test]
fn moving_video_keeps_valid_partitions() {
    let video = generate(&SynthSpec::new(SynthKind::MovingSquare, 5, 80, 60, 4)).unwrap();
    let labs: Vec<_> = video
        .frames
        .iter()
        .enumerate()
        .map(|(i, img)| to_lab(&Frame::from_rgb(i, format!("{i}"), 80, 60, img.as_raw().clone())))
        .collect();
    let flows = compute_flows(&labs, &PipelineConfig::default());
    let ms = segment_video(&labs, &flows, &default_scale_targets(80 * 60), &SlicParams::default()).unwrap();
    for scale in &ms.scales {
        for lab in scale {
            assert_eq!(common::partition_violation(lab), None);
        }
    }
}
