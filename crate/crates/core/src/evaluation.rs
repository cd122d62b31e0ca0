//! Precision/recall curves, F-measure, MAE and report files.
//!
//! Frames are reduced to a small [`FrameEval`] as soon as they are scored,
//! so a whole dataset can be evaluated without holding its maps in memory.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::frame_io::{MaskFrame, SaliencyMap};

pub const THRESHOLDS: usize = 256;
pub const BETA2: f64 = 0.3;

/// `(precision, recall)` at each threshold `θ ∈ 0..=255`.
pub type PrCurve = Vec<(f64, f64)>;

fn check_dims(sm: &SaliencyMap, gt: &MaskFrame) -> Result<()> {
    if sm.width() != gt.width || sm.height() != gt.height {
        return Err(Error::MapMismatch(sm.width(), sm.height(), gt.width, gt.height));
    }
    Ok(())
}

fn check_range(sm: &SaliencyMap) -> Result<()> {
    match sm
        .data()
        .iter()
        .position(|v| !(0.0..=1.0).contains(v))
    {
        Some(index) => Err(Error::InvalidSaliency {
            index,
            value: sm.data()[index],
        }),
        None => Ok(()),
    }
}

/// Precision and recall of a binary prediction.
pub fn precision_recall(bm: &MaskFrame, gt: &MaskFrame) -> Result<(f64, f64)> {
    if bm.width != gt.width || bm.height != gt.height {
        return Err(Error::MapMismatch(bm.width, bm.height, gt.width, gt.height));
    }
    let hits = bm
        .values
        .iter()
        .zip(&gt.values)
        .filter(|(&b, &g)| b && g)
        .count();
    Ok(ratios(hits, bm.positives(), gt.positives()))
}

fn ratios(hits: usize, predicted: usize, actual: usize) -> (f64, f64) {
    let p = if predicted == 0 {
        if actual == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        hits as f64 / predicted as f64
    };
    let r = if actual == 0 {
        0.0
    } else {
        hits as f64 / actual as f64
    };
    (p, r)
}

/// `(1 + β²)pr / (β²p + r)`, 0 when the denominator is 0.
pub fn f_measure(p: f64, r: f64, beta2: f64) -> f64 {
    let denom = beta2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * p * r / denom
    }
}

/// Binarizes at `255·s ≥ θ`.
pub fn binarize(sm: &SaliencyMap, theta: u8) -> MaskFrame {
    MaskFrame {
        width: sm.width(),
        height: sm.height(),
        values: sm.data().iter().map(|&s| 255.0 * s >= theta as f64).collect(),
    }
}

/// Largest threshold a value passes: `255·s ≥ θ ⇔ floor(255·s) ≥ θ` for integer θ.
#[inline]
fn level(s: f64) -> usize {
    ((255.0 * s).floor() as usize).min(THRESHOLDS - 1)
}

/// Per-frame precision/recall for all 256 thresholds.
pub fn frame_pr_curve(sm: &SaliencyMap, gt: &MaskFrame) -> Result<PrCurve> {
    check_dims(sm, gt)?;
    check_range(sm)?;
    let mut all = [0usize; THRESHOLDS];
    let mut hit = [0usize; THRESHOLDS];
    for (&s, &g) in sm.data().iter().zip(&gt.values) {
        let l = level(s);
        all[l] += 1;
        if g {
            hit[l] += 1;
        }
    }
    let actual = gt.positives();
    let mut curve = vec![(0.0, 0.0); THRESHOLDS];
    let (mut predicted, mut hits) = (0usize, 0usize);
    for theta in (0..THRESHOLDS).rev() {
        predicted += all[theta];
        hits += hit[theta];
        curve[theta] = ratios(hits, predicted, actual);
    }
    Ok(curve)
}

/// Adaptive threshold `μ + σ` of the map, capped at its maximum.
pub fn adaptive_threshold(sm: &SaliencyMap) -> f64 {
    let n = sm.len().max(1) as f64;
    let mean = sm.data().iter().sum::<f64>() / n;
    let var = sm.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let (_, max) = sm.min_max();
    (mean + var.sqrt()).min(max)
}

/// F-measure of one frame at its adaptive threshold.
pub fn frame_f_adap(sm: &SaliencyMap, gt: &MaskFrame) -> Result<f64> {
    check_dims(sm, gt)?;
    let theta = adaptive_threshold(sm);
    let bm = MaskFrame {
        width: sm.width(),
        height: sm.height(),
        values: sm.data().iter().map(|&s| s >= theta).collect(),
    };
    let (p, r) = precision_recall(&bm, gt)?;
    Ok(f_measure(p, r, BETA2))
}

/// Mean absolute difference against the 0/1 ground truth.
pub fn mae(sm: &SaliencyMap, gt: &MaskFrame) -> Result<f64> {
    check_dims(sm, gt)?;
    let total: f64 = sm
        .data()
        .iter()
        .zip(&gt.values)
        .map(|(&s, &g)| (s - if g { 1.0 } else { 0.0 }).abs())
        .sum();
    Ok(total / sm.len().max(1) as f64)
}

/// Scores of one annotated frame. Frames with empty ground truth only
/// contribute to MAE.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameEval {
    pub pr: Option<PrCurve>,
    pub f_adap: Option<f64>,
    pub mae: f64,
}

pub fn evaluate_frame(sm: &SaliencyMap, gt: &MaskFrame) -> Result<FrameEval> {
    let mae = mae(sm, gt)?;
    if gt.positives() == 0 {
        check_range(sm)?;
        return Ok(FrameEval {
            pr: None,
            f_adap: None,
            mae,
        });
    }
    Ok(FrameEval {
        pr: Some(frame_pr_curve(sm, gt)?),
        f_adap: Some(frame_f_adap(sm, gt)?),
        mae,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VideoReport {
    pub name: String,
    pub frames: usize,
    /// Frames with non-empty ground truth.
    pub scored_frames: usize,
    pub pr_curve: PrCurve,
    pub f_adap: f64,
    pub f_max: f64,
    pub mae: f64,
}

fn mean_curve<'a>(curves: impl Iterator<Item = &'a PrCurve>) -> PrCurve {
    let mut sum = vec![(0.0, 0.0); THRESHOLDS];
    let mut n = 0usize;
    for c in curves {
        n += 1;
        for (s, &(p, r)) in sum.iter_mut().zip(c) {
            s.0 += p;
            s.1 += r;
        }
    }
    if n > 0 {
        for s in &mut sum {
            s.0 /= n as f64;
            s.1 /= n as f64;
        }
    }
    sum
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Largest F over the curve.
pub fn f_max(curve: &[(f64, f64)]) -> f64 {
    curve
        .iter()
        .map(|&(p, r)| f_measure(p, r, BETA2))
        .fold(0.0, f64::max)
}

impl VideoReport {
    /// Averages frames in order; errors when no frame was annotated.
    pub fn from_frames(name: impl Into<String>, frames: &[FrameEval]) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::NoAnnotations);
        }
        let pr_curve = mean_curve(frames.iter().filter_map(|f| f.pr.as_ref()));
        Ok(VideoReport {
            name: name.into(),
            frames: frames.len(),
            scored_frames: frames.iter().filter(|f| f.pr.is_some()).count(),
            f_max: f_max(&pr_curve),
            f_adap: mean(frames.iter().filter_map(|f| f.f_adap)),
            mae: mean(frames.iter().map(|f| f.mae)),
            pr_curve,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub pr_curve: PrCurve,
    pub f_adap: f64,
    pub f_max: f64,
    pub mae: f64,
    pub per_video: Vec<VideoReport>,
}

impl EvalReport {
    /// Mean of the per-video averages; videos without any non-empty ground
    /// truth are left out of the precision/recall figures.
    pub fn from_videos(per_video: Vec<VideoReport>) -> Result<Self> {
        if per_video.is_empty() {
            return Err(Error::NoAnnotations);
        }
        let scored = || per_video.iter().filter(|v| v.scored_frames > 0);
        let pr_curve = mean_curve(scored().map(|v| &v.pr_curve));
        Ok(EvalReport {
            f_max: f_max(&pr_curve),
            f_adap: mean(scored().map(|v| v.f_adap)),
            mae: mean(per_video.iter().map(|v| v.mae)),
            pr_curve,
            per_video,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,precision,recall,f\n");
        for (theta, &(p, r)) in self.pr_curve.iter().enumerate() {
            let _ = writeln!(out, "{theta},{p},{r},{}", f_measure(p, r, BETA2));
        }
        let _ = writeln!(out, "summary,{},{},{}", self.f_adap, self.f_max, self.mae);
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Evaluates `(map, ground truth)` pairs of one video; pairs without ground
/// truth are skipped.
pub fn evaluate_video<'a>(
    name: &str,
    pairs: impl IntoIterator<Item = (&'a SaliencyMap, Option<&'a MaskFrame>)>,
) -> Result<VideoReport> {
    let frames = pairs
        .into_iter()
        .filter_map(|(sm, gt)| gt.map(|g| evaluate_frame(sm, g)))
        .collect::<Result<Vec<_>>>()?;
    VideoReport::from_frames(name, &frames)
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// PR-curve plot, recall on x and precision on y, one polyline per label.
pub fn pr_svg(curves: &[(String, PrCurve)]) -> String {
    let (size, margin) = (400.0, 50.0);
    let px = |r: f64| margin + r * size;
    let py = |p: f64| margin + (1.0 - p) * size;
    let total = size + 2.0 * margin;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{margin}" y="{margin}" width="{size}" height="{size}" fill="none" stroke="black"/>"#
    );
    for i in 0..=10 {
        let t = i as f64 / 10.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{t:.1}</text>"#,
            px(t),
            py(0.0) + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{t:.1}</text>"#,
            margin - 6.0,
            py(t) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Recall</text>"#,
        px(0.5),
        total - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">Precision</text>"#,
        py(0.5),
        py(0.5)
    );
    for (i, (label, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = curve
            .iter()
            .map(|&(p, r)| format!("{:.2},{:.2}", px(r), py(p)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = margin + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">{}</text>"#,
            margin + 8.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn write_pr_svg(curves: &[(String, PrCurve)], path: &Path) -> Result<()> {
    std::fs::write(path, pr_svg(curves)).map_err(|e| Error::io(path, e))
}

/// Reads the curve back from a CSV written by [`EvalReport::to_csv`].
pub fn read_curve_csv(path: &Path) -> Result<PrCurve> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = || Error::Config(format!("{} is not a PR-curve CSV", path.display()));
    let mut curve = Vec::with_capacity(THRESHOLDS);
    for line in text.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.first() == Some(&"summary") {
            break;
        }
        if fields.len() < 3 {
            return Err(bad());
        }
        let p = fields[1].parse().map_err(|_| bad())?;
        let r = fields[2].parse().map_err(|_| bad())?;
        curve.push((p, r));
    }
    if curve.len() != THRESHOLDS {
        return Err(bad());
    }
    Ok(curve)
}
