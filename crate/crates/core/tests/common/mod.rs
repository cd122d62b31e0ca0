#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use saliency::frame_io::{Frame, MaskFrame};
use saliency::raster::Plane;
use saliency::segmentation::Labeling;

/// Smooth periodic random texture with values in roughly 0..100.
pub fn texture(w: usize, h: usize, seed: u64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Plane::from_fn(w, h, |_, _| rng.gen_range(0.0..100.0));
    // circular blur keeps the texture periodic so wrapped shifts are exact
    let sigma: f64 = 1.5;
    let r = 5isize;
    let k: Vec<f64> = (-r..=r).map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    let wrap = |p: &Plane, x: isize, y: isize| {
        p.get(x.rem_euclid(w as isize) as usize, y.rem_euclid(h as isize) as usize)
    };
    let hz = Plane::from_fn(w, h, |x, y| {
        (-r..=r).zip(&k).map(|(d, kv)| kv * wrap(&noise, x as isize + d, y as isize)).sum::<f64>() / s
    });
    Plane::from_fn(w, h, |x, y| {
        (-r..=r).zip(&k).map(|(d, kv)| kv * wrap(&hz, x as isize, y as isize + d)).sum::<f64>() / s
    })
}

pub fn shifted(p: &Plane, dx: isize, dy: isize) -> Plane {
    let (w, h) = (p.width() as isize, p.height() as isize);
    Plane::from_fn(p.width(), p.height(), |x, y| {
        p.get((x as isize - dx).rem_euclid(w) as usize, (y as isize - dy).rem_euclid(h) as usize)
    })
}

/// Colored textured frame: three smooth textures mixed into RGB.
pub fn random_frame(index: usize, w: usize, h: usize, seed: u64) -> Frame {
    let chans: Vec<Plane> = (0..3).map(|c| texture(w, h, seed * 3 + c)).collect();
    let mut rgb = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            for c in &chans {
                // stretch the blurred texture (mostly 35..65) over the byte range
                rgb.push(((c.get(x, y) - 50.0) * 6.0 + 128.0).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Frame::from_rgb(index, format!("{index:04}"), w, h, rgb)
}

/// Checks that labels are dense, regions match their pixel counts, and every
/// region is one 4-connected component. Returns a description of the first
/// violation.
pub fn partition_violation(lab: &Labeling) -> Option<String> {
    let (w, h) = (lab.width, lab.height);
    let n = lab.region_count();
    if lab.labels.len() != w * h {
        return Some("label map has wrong size".into());
    }
    let mut counts = vec![0usize; n];
    for &l in &lab.labels {
        if l as usize >= n {
            return Some(format!("label {l} outside 0..{n}"));
        }
        counts[l as usize] += 1;
    }
    for (id, r) in lab.regions.iter().enumerate() {
        if counts[id] == 0 || counts[id] != r.pixel_count {
            return Some(format!("region {id} has {} px, recorded {}", counts[id], r.pixel_count));
        }
    }
    let mut seen = vec![false; w * h];
    let mut components = vec![0usize; n];
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        let label = lab.labels[start];
        components[label as usize] += 1;
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            let mut neighbors = Vec::with_capacity(4);
            if x > 0 {
                neighbors.push(i - 1);
            }
            if x + 1 < w {
                neighbors.push(i + 1);
            }
            if y > 0 {
                neighbors.push(i - w);
            }
            if y + 1 < h {
                neighbors.push(i + w);
            }
            for j in neighbors {
                if !seen[j] && lab.labels[j] == label {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    components
        .iter()
        .position(|&c| c != 1)
        .map(|id| format!("region {id} has {} components", components[id]))
}

/// Reference scores computed by direct enumeration, written without reusing
/// any of the library's metric code.
pub mod brute {
    use super::*;

    pub const BETA2: f64 = 0.3;

    pub fn f(p: f64, r: f64) -> f64 {
        if BETA2 * p + r == 0.0 {
            0.0
        } else {
            (1.0 + BETA2) * p * r / (BETA2 * p + r)
        }
    }

    /// `(|BM∩GT|, |BM|, |GT|)` at threshold `theta`.
    pub fn counts(sm: &Plane, gt: &MaskFrame, theta: u32) -> (usize, usize, usize) {
        let mut tp = 0;
        let mut pos = 0;
        let mut actual = 0;
        for i in 0..sm.len() {
            let b = 255.0 * sm.data()[i] >= theta as f64;
            let g = gt.values[i];
            if b {
                pos += 1;
            }
            if g {
                actual += 1;
            }
            if b && g {
                tp += 1;
            }
        }
        (tp, pos, actual)
    }

    pub fn pr(tp: usize, pos: usize, actual: usize) -> (f64, f64) {
        let p = match (pos, actual) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => tp as f64 / pos as f64,
        };
        let r = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
        (p, r)
    }

    pub fn f_adap_frame(sm: &Plane, gt: &MaskFrame) -> f64 {
        let n = sm.len() as f64;
        let mu = sm.data().iter().sum::<f64>() / n;
        let sd = (sm.data().iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
        let max = sm.data().iter().cloned().fold(f64::MIN, f64::max);
        let theta = (mu + sd).min(max);
        let (mut tp, mut pos, mut actual) = (0, 0, 0);
        for i in 0..sm.len() {
            let b = sm.data()[i] >= theta;
            pos += b as usize;
            actual += gt.values[i] as usize;
            tp += (b && gt.values[i]) as usize;
        }
        let (p, r) = pr(tp, pos, actual);
        f(p, r)
    }

    pub fn mae_frame(sm: &Plane, gt: &MaskFrame) -> f64 {
        let mut total = 0.0;
        for i in 0..sm.len() {
            total += (sm.data()[i] - if gt.values[i] { 1.0 } else { 0.0 }).abs();
        }
        total / sm.len() as f64
    }

    pub struct Scores {
        pub curve: Vec<(f64, f64)>,
        pub f_adap: f64,
        pub f_max: f64,
        pub mae: f64,
    }

    /// Videos of `(map, gt)` pairs: frames averaged per video, then videos.
    pub fn evaluate(videos: &[Vec<(Plane, MaskFrame)>]) -> Scores {
        let mut curve = vec![(0.0, 0.0); 256];
        let (mut f_adap, mut mae) = (0.0, 0.0);
        let mut scored_videos = 0usize;
        for video in videos {
            let scored: Vec<&(Plane, MaskFrame)> =
                video.iter().filter(|(_, g)| g.values.iter().any(|&v| v)).collect();
            mae += video.iter().map(|(s, g)| mae_frame(s, g)).sum::<f64>() / video.len() as f64;
            if scored.is_empty() {
                continue;
            }
            scored_videos += 1;
            for theta in 0..256u32 {
                let (mut ps, mut rs) = (0.0, 0.0);
                for (s, g) in &scored {
                    let (tp, pos, actual) = counts(s, g, theta);
                    let (p, r) = pr(tp, pos, actual);
                    ps += p;
                    rs += r;
                }
                curve[theta as usize].0 += ps / scored.len() as f64;
                curve[theta as usize].1 += rs / scored.len() as f64;
            }
            f_adap += scored.iter().map(|(s, g)| f_adap_frame(s, g)).sum::<f64>() / scored.len() as f64;
        }
        for c in &mut curve {
            c.0 /= scored_videos as f64;
            c.1 /= scored_videos as f64;
        }
        let f_max = curve.iter().map(|&(p, r)| f(p, r)).fold(0.0, f64::max);
        Scores {
            curve,
            f_adap: f_adap / scored_videos as f64,
            f_max,
            mae: mae / videos.len() as f64,
        }
    }
}

/// Random map/mask pair; every fourth map is quantized to bytes.
pub fn random_pair(rng: &mut ChaCha8Rng, w: usize, h: usize, k: usize) -> (Plane, MaskFrame) {
    let quantized = k % 4 == 0;
    let sm = Plane::from_fn(w, h, |_, _| {
        if quantized {
            rng.gen_range(0..=255u8) as f64 / 255.0
        } else {
            rng.gen_range(0.0..=1.0)
        }
    });
    let density = rng.gen_range(0.1..0.6);
    let values = (0..w * h).map(|_| rng.gen_bool(density)).collect::<Vec<_>>();
    let mut gt = MaskFrame { width: w, height: h, values };
    if gt.positives() == 0 {
        gt.values[0] = true;
    }
    (sm, gt)
}
