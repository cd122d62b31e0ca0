//! Spatial saliency entities, adaptive temporal smoothing along region
//! tracks, and multi-layer cellular-automata fusion across scales.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::SaliencyMap;
use crate::raster::{normalize_min_max, Plane, TiePolicy};
use crate::segmentation::Labeling;

const MCA_CLAMP: f64 = 1e-4;
const OTSU_BINS: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AtwParams {
    /// Largest window, in frames.
    pub max_window: usize,
    pub lambda: f64,
    pub sigma_tpdst: f64,
}

impl Default for AtwParams {
    fn default() -> Self {
        AtwParams {
            max_window: 10,
            lambda: 2.0,
            sigma_tpdst: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum McaLambda {
    /// `Λ(S) = ln(S / (1 - S))`.
    #[default]
    LogOdds,
    /// `Λ(S) = S / (1 - S)`.
    Odds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McaParams {
    pub iterations: usize,
    /// Per-vote log-odds step `ln(λ / (1 - λ))`.
    pub coupling: f64,
    pub lambda: McaLambda,
}

impl Default for McaParams {
    fn default() -> Self {
        McaParams {
            iterations: 5,
            coupling: 0.15,
            lambda: McaLambda::LogOdds,
        }
    }
}

/// `S = S_lf^α · S_mf^(1-α)`, min-max normalized. `0^0` is 1.
pub fn combine_spatial(s_lf: &[f64], s_mf: &[f64], alpha: f64) -> Vec<f64> {
    assert_eq!(s_lf.len(), s_mf.len(), "feature maps cover different regions");
    let raw: Vec<f64> = combine_raw(s_lf, s_mf, alpha);
    normalize_min_max(&raw, TiePolicy::KeepPositive)
}

/// The multiplicative combination before normalization.
pub fn combine_raw(s_lf: &[f64], s_mf: &[f64], alpha: f64) -> Vec<f64> {
    s_lf.iter()
        .zip(s_mf)
        .map(|(&l, &m)| l.powf(alpha) * m.powf(1.0 - alpha))
        .collect()
}

/// Flow-magnitude statistics of one region.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionStats {
    pub mu: f64,
    pub sigma: f64,
    /// Coefficient of variation `σ/μ`, 0 when `μ = 0`.
    pub beta: f64,
}

pub fn region_motion_stats(magnitudes: impl IntoIterator<Item = f64>) -> MotionStats {
    let (mut n, mut sum, mut sum_sq) = (0usize, 0.0, 0.0);
    for m in magnitudes {
        n += 1;
        sum += m;
        sum_sq += m * m;
    }
    if n == 0 {
        return MotionStats {
            mu: 0.0,
            sigma: 0.0,
            beta: 0.0,
        };
    }
    let mu = sum / n as f64;
    let sigma = (sum_sq / n as f64 - mu * mu).max(0.0).sqrt();
    let beta = if mu > 0.0 { sigma / mu } else { 0.0 };
    MotionStats { mu, sigma, beta }
}

/// Per-region motion statistics from a labeling and a magnitude plane.
pub fn labeling_motion_stats(labeling: &Labeling, magnitude: &Plane) -> Vec<MotionStats> {
    labeling
        .region_pixels()
        .iter()
        .map(|pixels| region_motion_stats(pixels.iter().map(|&i| magnitude.data()[i])))
        .collect()
}

/// Window size `Φ = round(M · exp(-μλ/β))`, clamped to `[0, min(M, t)]`.
pub fn window_size(mu: f64, beta: f64, t: usize, params: &AtwParams) -> usize {
    let m = params.max_window as f64;
    let real = if beta == 0.0 {
        if mu == 0.0 {
            m
        } else {
            0.0
        }
    } else {
        m * (-mu * params.lambda / beta).exp()
    };
    let rounded = if real.is_finite() { real.round() } else { 0.0 };
    (rounded.max(0.0) as usize).min(params.max_window).min(t)
}

/// Gaussian-weighted mean of `samples` given as `(Δt, value)` with `Δt ≥ 0`,
/// over the window `Δt ≤ phi`.
pub fn smooth_track(samples: &[(usize, f64)], phi: usize, sigma_tpdst: f64) -> Option<f64> {
    let denom = 2.0 * (phi as f64).powi(2) * sigma_tpdst * sigma_tpdst;
    let (mut num, mut psi) = (0.0, 0.0);
    for &(dt, value) in samples.iter().filter(|(dt, _)| *dt <= phi) {
        let w = if dt == 0 {
            1.0
        } else {
            (-((dt * dt) as f64) / denom).exp()
        };
        num += w * value;
        psi += w;
    }
    (psi > 0.0).then(|| num / psi)
}

/// Bounded per-scale history of region values keyed by track id.
#[derive(Clone, Debug, Default)]
pub struct TemporalHistory {
    capacity: usize,
    frames: VecDeque<(usize, HashMap<u64, f64>)>,
}

impl TemporalHistory {
    /// Keeps the current frame plus `max_window` previous ones.
    pub fn new(max_window: usize) -> Self {
        TemporalHistory {
            capacity: max_window + 1,
            frames: VecDeque::with_capacity(max_window + 1),
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn push(&mut self, t: usize, tracks: &[u64], values: &[f64]) {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        let entry = tracks.iter().copied().zip(values.iter().copied()).collect();
        self.frames.push_back((t, entry));
    }

    /// Smooths the values pushed for frame `t`; `windows[i]` is region i's Φ.
    pub fn smooth(&self, t: usize, tracks: &[u64], windows: &[usize], sigma_tpdst: f64) -> Vec<f64> {
        tracks
            .iter()
            .zip(windows)
            .map(|(track, &phi)| {
                let samples: Vec<(usize, f64)> = self
                    .frames
                    .iter()
                    .filter(|(ft, _)| *ft <= t && t - *ft <= phi)
                    .filter_map(|(ft, map)| map.get(track).map(|&v| (t - ft, v)))
                    .collect();
                smooth_track(&samples, phi, sigma_tpdst).unwrap_or(0.0)
            })
            .collect()
    }
}

/// Paints each pixel with its region's value.
pub fn rasterize(values: &[f64], labeling: &Labeling) -> SaliencyMap {
    Plane::from_vec(
        labeling.width,
        labeling.height,
        labeling.labels.iter().map(|&l| values[l as usize]).collect(),
    )
}

#[inline]
fn otsu_bin(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * 255.0).round() as usize).min(OTSU_BINS - 1)
}

/// Otsu threshold over a 256-bin histogram. The returned threshold sits
/// halfway between the lowest maximizing cut bin and the next one; a map
/// occupying a single bin returns its mean value.
pub fn otsu(map: &SaliencyMap) -> f64 {
    let mut hist = [0usize; OTSU_BINS];
    for &v in map.data() {
        hist[otsu_bin(v)] += 1;
    }
    let occupied = hist.iter().filter(|&&c| c > 0).count();
    if occupied <= 1 {
        return map.mean();
    }
    let total = map.len() as f64;
    let total_mean: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &c)| i as f64 * c as f64)
        .sum::<f64>()
        / total;
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, &count) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += count as f64;
        sum0 += k as f64 * count as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (total_mean * total - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, k);
        }
    }
    (best.1 as f64 + 0.5) / 255.0
}

fn to_lambda(s: f64, mode: McaLambda) -> f64 {
    match mode {
        McaLambda::LogOdds => (s / (1.0 - s)).ln(),
        McaLambda::Odds => s / (1.0 - s),
    }
}

fn from_lambda(l: f64, mode: McaLambda) -> f64 {
    match mode {
        McaLambda::LogOdds => 1.0 / (1.0 + (-l).exp()),
        McaLambda::Odds => {
            let l = l.max(0.0);
            l / (1.0 + l)
        }
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Runs the cross-scale refinement and returns every map after each
/// iteration (`history[0]` is the clamped input), for inspection.
pub fn mca_iterate(maps: &[SaliencyMap], params: &McaParams) -> Result<Vec<Vec<SaliencyMap>>> {
    if maps.len() < 2 {
        return Err(Error::TooFewMaps(maps.len()));
    }
    let first = &maps[0];
    for m in &maps[1..] {
        if !m.same_dims(first) {
            return Err(Error::MapMismatch(
                first.width(),
                first.height(),
                m.width(),
                m.height(),
            ));
        }
    }
    let clamped: Vec<SaliencyMap> = maps
        .iter()
        .map(|m| m.map(|v| v.clamp(MCA_CLAMP, 1.0 - MCA_CLAMP)))
        .collect();
    let gammas: Vec<f64> = clamped
        .iter()
        .map(|m| to_lambda(otsu(m).clamp(MCA_CLAMP, 1.0 - MCA_CLAMP), params.lambda))
        .collect();
    let mut lambdas: Vec<Vec<f64>> = clamped
        .iter()
        .map(|m| m.data().iter().map(|&s| to_lambda(s, params.lambda)).collect())
        .collect();
    let mut history = vec![clamped];
    let n = first.len();
    for _ in 1..params.iterations.max(1) {
        let votes: Vec<Vec<f64>> = lambdas
            .iter()
            .zip(&gammas)
            .map(|(l, &g)| l.iter().map(|&v| sign(v - g)).collect())
            .collect();
        for (l, layer) in lambdas.iter_mut().enumerate() {
            for p in 0..n {
                let sum: f64 = (0..votes.len())
                    .filter(|&i| i != l)
                    .map(|i| votes[i][p])
                    .sum();
                layer[p] += params.coupling * sum;
            }
        }
        history.push(
            lambdas
                .iter()
                .map(|l| {
                    Plane::from_vec(
                        first.width(),
                        first.height(),
                        l.iter().map(|&v| from_lambda(v, params.lambda)).collect(),
                    )
                })
                .collect(),
        );
    }
    Ok(history)
}

/// Multi-layer cellular-automata fusion: refines every map with the other
/// maps' Otsu votes for `iterations - 1` steps, then averages them.
pub fn mca_fuse(maps: &[SaliencyMap], params: &McaParams) -> Result<SaliencyMap> {
    let history = mca_iterate(maps, params)?;
    let last = history.last().expect("history starts with the input");
    let n = last[0].len();
    let mut fused = vec![0.0; n];
    for layer in last {
        for (f, v) in fused.iter_mut().zip(layer.data()) {
            *f += v;
        }
    }
    let count = last.len() as f64;
    Ok(Plane::from_vec(
        last[0].width(),
        last[0].height(),
        fused.into_iter().map(|v| (v / count).clamp(0.0, 1.0)).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_examples() {
        let x = [0.2, 0.9, 0.5];
        let raw = combine_raw(&x, &x, 0.5);
        for (a, b) in raw.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
        let lf = [0.0, 0.3, 1.0];
        let mf = [0.7, 0.0, 0.4];
        assert_eq!(combine_spatial(&lf, &mf, 1.0), lf.to_vec());
        assert_eq!(combine_raw(&lf, &mf, 0.5)[0], 0.0);
        assert_eq!(combine_raw(&lf, &mf, 0.0), mf.to_vec());
    }

    #[test]
    fn motion_stats_examples() {
        let s = region_motion_stats([5.0; 4]);
        assert_eq!((s.mu, s.sigma, s.beta), (5.0, 0.0, 0.0));
        let z = region_motion_stats([0.0; 3]);
        assert_eq!((z.mu, z.sigma, z.beta), (0.0, 0.0, 0.0));
        let h = region_motion_stats([0.0, 10.0, 0.0, 10.0]);
        assert_eq!((h.mu, h.sigma, h.beta), (5.0, 5.0, 1.0));
    }

    #[test]
    fn window_size_examples() {
        let p = AtwParams::default();
        assert_eq!(window_size(0.0, 0.0, 100, &p), 10);
        assert_eq!(window_size(5.0, 1.0, 100, &p), 0);
        assert_eq!(window_size(0.0, 0.0, 3, &p), 3);
        assert_eq!(window_size(2.0, 0.0, 100, &p), 0);
        // 10 * exp(-0.1 * 2 / 0.4) = 6.07
        assert_eq!(window_size(0.1, 0.4, 100, &p), 6);
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth_track(&[(0, 0.3), (1, 0.9)], 0, 10.0), Some(0.3));
        assert!((smooth_track(&[(0, 0.4), (1, 0.4), (2, 0.4)], 2, 10.0).unwrap() - 0.4).abs() < 1e-12);
        let w0 = (-1.0f64 / (2.0 * 1.0 * 100.0)).exp();
        let expected = 1.0 / (1.0 + w0);
        let got = smooth_track(&[(1, 0.0), (0, 1.0)], 1, 10.0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.5012).abs() < 1e-4);
    }

    #[test]
    fn history_is_bounded_and_skips_missing_tracks() {
        let mut h = TemporalHistory::new(2);
        h.push(0, &[1, 2], &[0.0, 0.5]);
        h.push(1, &[1], &[1.0]);
        h.push(2, &[1, 2], &[1.0, 0.5]);
        h.push(3, &[1, 2], &[1.0, 0.1]);
        assert_eq!(h.len(), 3);
        let out = h.smooth(3, &[1, 2], &[10, 10], 10.0);
        assert!((out[0] - 1.0).abs() < 1e-12);
        // track 2 is absent at t=1, present at t=2,3; t=0 evicted
        let w1 = (-1.0f64 / (2.0 * 100.0 * 100.0)).exp();
        assert!((out[1] - (0.1 + w1 * 0.5) / (1.0 + w1)).abs() < 1e-12);
    }

    #[test]
    fn rasterize_examples() {
        let lab = Labeling::from_labels(2, 2, vec![0, 1, 1, 0], &[0, 1]);
        assert_eq!(rasterize(&[0.0, 1.0], &lab).data(), &[0.0, 1.0, 1.0, 0.0]);
        let single = Labeling::from_labels(2, 1, vec![0, 0], &[0]);
        assert_eq!(rasterize(&[0.7], &single).data(), &[0.7, 0.7]);
    }

    #[test]
    fn otsu_constant_and_bimodal() {
        assert!((otsu(&Plane::new(4, 4, 0.4)) - 0.4).abs() < 1e-12);
        let bimodal = Plane::from_fn(4, 4, |x, _| if x < 2 { 0.2 } else { 0.8 });
        let t = otsu(&bimodal);
        assert!(t > 0.2 && t < 0.8, "{t}");
    }

    #[test]
    fn mca_rejects_bad_inputs() {
        let a = Plane::new(2, 2, 0.5);
        assert!(matches!(mca_fuse(&[a.clone()], &McaParams::default()), Err(Error::TooFewMaps(1))));
        let b = Plane::new(3, 2, 0.5);
        assert!(matches!(
            mca_fuse(&[a, b], &McaParams::default()),
            Err(Error::MapMismatch(..))
        ));
    }

    #[test]
    fn mca_opposing_votes_cancel_for_two_maps() {
        // pixel 0: map 1 above its threshold, map 2 below
        let m1 = Plane::from_vec(2, 1, vec![0.9, 0.1]);
        let m2 = Plane::from_vec(2, 1, vec![0.1, 0.9]);
        let history = mca_iterate(&[m1, m2], &McaParams::default()).unwrap();
        let first = &history[0];
        let second = &history[1];
        let logit = |s: f64| (s / (1.0 - s)).ln();
        // map 1 receives a -0.15 vote from map 2 at pixel 0, map 2 gets +0.15
        assert!((logit(second[0].get(0, 0)) - (logit(first[0].get(0, 0)) - 0.15)).abs() < 1e-9);
        assert!((logit(second[1].get(0, 0)) - (logit(first[1].get(0, 0)) + 0.15)).abs() < 1e-9);
    }

    #[test]
    fn mca_output_in_unit_range() {
        let m1 = Plane::from_vec(3, 1, vec![0.0, 0.5, 1.0]);
        let m2 = Plane::from_vec(3, 1, vec![1.0, 0.5, 0.0]);
        for mode in [McaLambda::LogOdds, McaLambda::Odds] {
            let p = McaParams {
                lambda: mode,
                ..McaParams::default()
            };
            let out = mca_fuse(&[m1.clone(), m2.clone()], &p).unwrap();
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
