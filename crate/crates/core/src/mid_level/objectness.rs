//! Window-sampling objectness proxy.
//!
//! Random windows are scored with four cues (spectral-residual saliency,
//! center/surround color contrast, edge density in the inner ring, and
//! superpixel straddling), each mapped through fixed linear likelihoods and
//! combined with a naive-Bayes posterior. A pixel's objectness is the sum of
//! the posteriors of the windows covering it, divided by the number of windows.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fft2::fft2;
use crate::frame_io::{read_saliency, LabFrame};
use crate::low_level::chi_square;
use crate::raster::{normalize_min_max, Plane, TiePolicy};
use crate::segmentation::Labeling;

const SPECTRAL_SIDE: usize = 64;
const HIST_BINS: usize = 16;
const EDGE_FRACTION: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectnessParams {
    pub windows: usize,
    /// Minimum window side as a fraction of the frame side.
    pub min_side: f64,
    pub seed: u64,
}

impl Default for ObjectnessParams {
    fn default() -> Self {
        ObjectnessParams {
            windows: 1000,
            min_side: 0.1,
            seed: 0x5eed_0b1e,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectnessSource {
    Computed,
    Loaded,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectnessMap {
    pub values: Plane,
    pub source: ObjectnessSource,
}

/// Reads an externally computed map (grayscale, value/255).
pub fn load_objectness(path: &Path) -> Result<ObjectnessMap> {
    Ok(ObjectnessMap {
        values: read_saliency(path)?,
        source: ObjectnessSource::Loaded,
    })
}

/// Cue score `s ∈ [0,1]` to `(p(cue|obj), p(cue|bg))`.
#[inline]
fn likelihoods(s: f64) -> (f64, f64) {
    let s = s.clamp(0.0, 1.0);
    (0.25 + 0.5 * s, 0.75 - 0.5 * s)
}

/// Posterior `p(obj | cues)` with equal priors.
pub fn window_posterior(cues: &[f64]) -> f64 {
    let (mut obj, mut bg) = (0.5, 0.5);
    for &s in cues {
        let (po, pb) = likelihoods(s);
        obj *= po;
        bg *= pb;
    }
    obj / (obj + bg)
}

/// Spectral-residual saliency of `plane`, min-max normalized to `[0, 1]`.
pub fn spectral_residual(plane: &Plane) -> Plane {
    let (w, h) = (plane.width(), plane.height());
    let (lo, hi) = plane.min_max();
    if hi - lo <= 1e-9 {
        return Plane::new(w, h, 0.0);
    }
    let side = SPECTRAL_SIDE;
    let small = plane.resize(side, side);
    let mut spectrum: Vec<Complex64> = small
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    fft2(&mut spectrum, side, side, false);
    let log_amp: Vec<f64> = spectrum.iter().map(|c| (c.norm() + 1e-9).ln()).collect();
    let phase: Vec<f64> = spectrum.iter().map(|c| c.arg()).collect();
    let at = |x: isize, y: isize| {
        log_amp[(y.rem_euclid(side as isize) as usize) * side + x.rem_euclid(side as isize) as usize]
    };
    for y in 0..side {
        for x in 0..side {
            let mut mean = 0.0;
            for dy in -1..=1 {
                for dx in -1..=1 {
                    mean += at(x as isize + dx, y as isize + dy);
                }
            }
            let residual = log_amp[y * side + x] - mean / 9.0;
            spectrum[y * side + x] = Complex64::from_polar(residual.exp(), phase[y * side + x]);
        }
    }
    fft2(&mut spectrum, side, side, true);
    let energy = Plane::from_vec(side, side, spectrum.iter().map(|c| c.norm_sqr()).collect());
    let smooth = energy.gaussian_blur(2.5).resize(w, h);
    Plane::from_vec(w, h, normalize_min_max(smooth.data(), TiePolicy::Zero))
}

/// Summed-area table with a zero first row/column.
struct Integral {
    width: usize,
    sums: Vec<f64>,
}

impl Integral {
    fn new(width: usize, height: usize, value: impl Fn(usize, usize) -> f64) -> Self {
        let stride = width + 1;
        let mut sums = vec![0.0; stride * (height + 1)];
        for y in 0..height {
            let mut row = 0.0;
            for x in 0..width {
                row += value(x, y);
                sums[(y + 1) * stride + x + 1] = sums[y * stride + x + 1] + row;
            }
        }
        Integral { width, sums }
    }

    /// Sum over `[x0, x1) × [y0, y1)`.
    #[inline]
    fn rect(&self, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
        let s = self.width + 1;
        self.sums[y1 * s + x1] - self.sums[y0 * s + x1] - self.sums[y1 * s + x0] + self.sums[y0 * s + x0]
    }
}

#[derive(Clone, Copy, Debug)]
struct Window {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
}

impl Window {
    fn area(&self) -> f64 {
        ((self.x1 - self.x0) * (self.y1 - self.y0)) as f64
    }

    /// Same center, sides scaled by `factor`, clipped to the frame.
    fn scaled(&self, factor: f64, w: usize, h: usize) -> Window {
        let cx = 0.5 * (self.x0 + self.x1) as f64;
        let cy = 0.5 * (self.y0 + self.y1) as f64;
        let hw = 0.5 * factor * (self.x1 - self.x0) as f64;
        let hh = 0.5 * factor * (self.y1 - self.y0) as f64;
        let x0 = (cx - hw).round().max(0.0) as usize;
        let y0 = (cy - hh).round().max(0.0) as usize;
        let x1 = ((cx + hw).round() as usize).clamp(x0, w);
        let y1 = ((cy + hh).round() as usize).clamp(y0, h);
        Window { x0, y0, x1, y1 }
    }
}

fn sample_windows(w: usize, h: usize, params: &ObjectnessParams) -> Vec<Window> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let min_w = ((params.min_side * w as f64).ceil() as usize).clamp(1, w);
    let min_h = ((params.min_side * h as f64).ceil() as usize).clamp(1, h);
    (0..params.windows)
        .map(|_| {
            let ww = rng.gen_range(min_w..=w);
            let wh = rng.gen_range(min_h..=h);
            let x0 = rng.gen_range(0..=w - ww);
            let y0 = rng.gen_range(0..=h - wh);
            Window {
                x0,
                y0,
                x1: x0 + ww,
                y1: y0 + wh,
            }
        })
        .collect()
}

fn sobel_edges(plane: &Plane) -> Plane {
    let magnitude = Plane::from_fn(plane.width(), plane.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let p = |dx: isize, dy: isize| plane.get_clamped(x + dx, y + dy);
        let gx = p(1, -1) + 2.0 * p(1, 0) + p(1, 1) - p(-1, -1) - 2.0 * p(-1, 0) - p(-1, 1);
        let gy = p(-1, 1) + 2.0 * p(0, 1) + p(1, 1) - p(-1, -1) - 2.0 * p(0, -1) - p(1, -1);
        gx.hypot(gy)
    });
    let max = magnitude.min_max().1;
    let threshold = EDGE_FRACTION * max;
    magnitude.map(|m| if max > 1e-9 && m >= threshold { 1.0 } else { 0.0 })
}

fn bin_of(value: f64, lo: f64, hi: f64) -> usize {
    (((value - lo) / (hi - lo) * HIST_BINS as f64).floor().max(0.0) as usize).min(HIST_BINS - 1)
}

/// Per-superpixel integral images restricted to each region's bounding box.
struct SuperpixelIntegrals {
    boxes: Vec<(usize, usize, usize, usize)>,
    tables: Vec<Integral>,
    sizes: Vec<f64>,
}

impl SuperpixelIntegrals {
    fn new(labeling: &Labeling) -> Self {
        let (w, h) = (labeling.width, labeling.height);
        let r = labeling.region_count();
        let mut boxes = vec![(usize::MAX, usize::MAX, 0, 0); r];
        for (i, &l) in labeling.labels.iter().enumerate() {
            let (x, y) = (i % w, i / w);
            let b = &mut boxes[l as usize];
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x + 1);
            b.3 = b.3.max(y + 1);
        }
        let tables = boxes
            .iter()
            .enumerate()
            .map(|(id, &(x0, y0, x1, y1))| {
                Integral::new(x1 - x0, y1 - y0, |x, y| {
                    let (gx, gy) = (x + x0, y + y0);
                    debug_assert!(gx < w && gy < h);
                    if labeling.labels[gy * w + gx] as usize == id {
                        1.0
                    } else {
                        0.0
                    }
                })
            })
            .collect();
        let sizes = labeling.regions.iter().map(|r| r.pixel_count as f64).collect();
        SuperpixelIntegrals {
            boxes,
            tables,
            sizes,
        }
    }

    fn straddling(&self, win: &Window) -> f64 {
        let mut total = 0.0;
        for (id, &(bx0, by0, bx1, by1)) in self.boxes.iter().enumerate() {
            let x0 = win.x0.max(bx0);
            let y0 = win.y0.max(by0);
            let x1 = win.x1.min(bx1);
            let y1 = win.y1.min(by1);
            if x0 >= x1 || y0 >= y1 {
                continue;
            }
            let inside = self.tables[id].rect(x0 - bx0, y0 - by0, x1 - bx0, y1 - by0);
            total += inside.min(self.sizes[id] - inside);
        }
        (1.0 - total / win.area()).clamp(0.0, 1.0)
    }
}

/// Computes the objectness map of a frame given its finest-scale superpixels.
pub fn objectness(frame: &LabFrame, finest: &Labeling, params: &ObjectnessParams) -> ObjectnessMap {
    let (w, h) = (frame.width(), frame.height());
    let ms = Integral::new(w, h, {
        let sr = spectral_residual(&frame.l);
        move |x, y| sr.get(x, y)
    });
    let edges = sobel_edges(&frame.l);
    let ed = Integral::new(w, h, |x, y| edges.get(x, y));
    let bins: Vec<[usize; 3]> = (0..w * h)
        .map(|i| {
            [
                bin_of(frame.l.data()[i], 0.0, 100.0),
                HIST_BINS + bin_of(frame.a.data()[i], -128.0, 127.0),
                2 * HIST_BINS + bin_of(frame.b.data()[i], -128.0, 127.0),
            ]
        })
        .collect();
    let color: Vec<Integral> = (0..3 * HIST_BINS)
        .map(|bin| Integral::new(w, h, |x, y| bins[y * w + x].contains(&bin) as u8 as f64))
        .collect();
    let straddle = SuperpixelIntegrals::new(finest);

    let windows = sample_windows(w, h, params);
    let mut posteriors = Vec::with_capacity(windows.len());
    for win in &windows {
        let area = win.area();
        let ms_score = ms.rect(win.x0, win.y0, win.x1, win.y1) / area;

        let outer = win.scaled(2.0, w, h);
        let outer_area = outer.area();
        let cc_score = if outer_area > area {
            let inner: Vec<f64> = color
                .iter()
                .map(|t| t.rect(win.x0, win.y0, win.x1, win.y1) / (3.0 * area))
                .collect();
            let ring: Vec<f64> = color
                .iter()
                .map(|t| {
                    (t.rect(outer.x0, outer.y0, outer.x1, outer.y1)
                        - t.rect(win.x0, win.y0, win.x1, win.y1))
                        / (3.0 * (outer_area - area))
                })
                .collect();
            chi_square(&inner, &ring).unwrap_or(0.0)
        } else {
            0.0
        };

        let core = win.scaled(0.5, w, h);
        let ring_area = area - core.area();
        let ed_score = if ring_area > 0.0 {
            (ed.rect(win.x0, win.y0, win.x1, win.y1) - ed.rect(core.x0, core.y0, core.x1, core.y1))
                / ring_area
        } else {
            0.0
        };

        let ss_score = straddle.straddling(win);
        posteriors.push(window_posterior(&[ms_score, cc_score, ed_score, ss_score]));
    }

    // posterior mass covering each pixel via a 2-D difference array
    let stride = w + 1;
    let mut sum = vec![0.0; stride * (h + 1)];
    for (win, &p) in windows.iter().zip(&posteriors) {
        sum[win.y0 * stride + win.x0] += p;
        sum[win.y0 * stride + win.x1] -= p;
        sum[win.y1 * stride + win.x0] -= p;
        sum[win.y1 * stride + win.x1] += p;
    }
    for y in 0..=h {
        for x in 1..=w {
            sum[y * stride + x] += sum[y * stride + x - 1];
        }
    }
    for y in 1..=h {
        for x in 0..=w {
            sum[y * stride + x] += sum[(y - 1) * stride + x];
        }
    }
    let total = windows.len().max(1) as f64;
    let values = Plane::from_fn(w, h, |x, y| (sum[y * stride + x] / total).clamp(0.0, 1.0));
    ObjectnessMap {
        values,
        source: ObjectnessSource::Computed,
    }
}
