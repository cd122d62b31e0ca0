//! Region histograms of color, lightness, texture orientation and motion,
//! and the histogram-contrast map built from them.

mod gabor;

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

pub use gabor::{gabor_energy, GaborBank, GaborParams, GaborResponse};

use crate::error::{Error, Result};
use crate::flow::{flow_magnitude, flow_orientation, FlowField};
use crate::frame_io::LabFrame;
use crate::raster::{normalize_min_max, TiePolicy};
use crate::segmentation::Labeling;

pub const CHANNEL_BINS: usize = 16;
pub const COLOR_CHANNELS: usize = 4;
pub const FLOW_MAG_BINS: usize = 16;
pub const FLOW_ORI_BINS: usize = 9;
const CHI_SQUARE_EPS: f64 = 1e-10;

/// How the four color channel histograms are compared.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColorHistogramMode {
    /// One 64-bin histogram normalized jointly, one χ² call.
    #[default]
    Joint,
    /// Mean of the four per-channel χ² distances.
    PerChannel,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationBins {
    /// The 8 orientation counts resampled to 16 bins by circular linear interpolation.
    #[default]
    Interpolated16,
    Raw8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowLevelParams {
    /// Weights for (color, lightness, orientation, flow magnitude, flow orientation).
    pub weights: [f64; 5],
    pub sigma_spdst: f64,
    pub color_hist: ColorHistogramMode,
    pub orientation_bins: OrientationBins,
    pub gabor: GaborParams,
}

impl Default for LowLevelParams {
    fn default() -> Self {
        LowLevelParams {
            weights: [0.4, 0.1, 0.1, 0.2, 0.2],
            sigma_spdst: 0.2,
            color_hist: ColorHistogramMode::Joint,
            orientation_bins: OrientationBins::Interpolated16,
            gabor: GaborParams::default(),
        }
    }
}

/// Normalized per-region feature histograms.
#[derive(Clone, Debug, PartialEq)]
pub struct LowLevelHistograms {
    /// L, a, b, hue blocks of 16 bins each; the 64 bins sum to 1.
    pub color: Vec<f64>,
    pub lightness: Vec<f64>,
    pub orientation: Vec<f64>,
    pub flow_mag: Vec<f64>,
    pub flow_ori: Vec<f64>,
}

#[inline]
fn uniform_bin(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let t = ((value - lo) / (hi - lo) * bins as f64).floor();
    (t.max(0.0) as usize).min(bins - 1)
}

fn normalize(hist: &mut [f64]) -> bool {
    let total: f64 = hist.iter().sum();
    if total <= 0.0 {
        return false;
    }
    hist.iter_mut().for_each(|h| *h /= total);
    true
}

/// Resamples 8 circular orientation samples (θ = kπ/4) to 16 (θ = jπ/8).
fn resample_orientation(raw: &[f64; 8]) -> Vec<f64> {
    (0..16)
        .map(|j| {
            let lo = j / 2;
            if j % 2 == 0 {
                raw[lo]
            } else {
                0.5 * (raw[lo] + raw[(lo + 1) % 8])
            }
        })
        .collect()
}

/// Nearest-rank 99th percentile.
fn percentile_99(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Computes the five normalized histograms of every region.
pub fn region_histograms(
    labeling: &Labeling,
    frame: &LabFrame,
    gabor: &GaborResponse,
    flow: &FlowField,
    orientation_bins: OrientationBins,
) -> Result<Vec<LowLevelHistograms>> {
    let n = labeling.pixel_count();
    if frame.pixel_count() != n || gabor.energy.len() != n || flow.u.len() != n {
        return Err(Error::MapMismatch(
            labeling.width,
            labeling.height,
            frame.width(),
            frame.height(),
        ));
    }
    let magnitude = flow_magnitude(flow);
    let direction = flow_orientation(flow);
    let mag_hi = percentile_99(magnitude.data());

    let regions = labeling.region_count();
    let mut color = vec![vec![0.0; CHANNEL_BINS * COLOR_CHANNELS]; regions];
    let mut lightness = vec![vec![0.0; CHANNEL_BINS]; regions];
    let mut orient_weighted = vec![[0.0f64; 8]; regions];
    let mut orient_counts = vec![[0.0f64; 8]; regions];
    let mut flow_mag = vec![vec![0.0; FLOW_MAG_BINS]; regions];
    let mut flow_ori = vec![vec![0.0; FLOW_ORI_BINS]; regions];

    for (i, &label) in labeling.labels.iter().enumerate() {
        let r = label as usize;
        let l = frame.l.data()[i];
        let c = &mut color[r];
        c[uniform_bin(l, 0.0, 100.0, CHANNEL_BINS)] += 1.0;
        c[CHANNEL_BINS + uniform_bin(frame.a.data()[i], -128.0, 127.0, CHANNEL_BINS)] += 1.0;
        c[2 * CHANNEL_BINS + uniform_bin(frame.b.data()[i], -128.0, 127.0, CHANNEL_BINS)] += 1.0;
        c[3 * CHANNEL_BINS + uniform_bin(frame.hue.data()[i], 0.0, 360.0, CHANNEL_BINS)] += 1.0;
        lightness[r][uniform_bin(l, 0.0, 100.0, CHANNEL_BINS)] += 1.0;
        let k = (gabor.dominant[i] as usize) % 8;
        orient_weighted[r][k] += gabor.energy[i];
        orient_counts[r][k] += 1.0;
        flow_mag[r][uniform_bin(magnitude.data()[i], 0.0, mag_hi, FLOW_MAG_BINS)] += 1.0;
        flow_ori[r][uniform_bin(direction.data()[i], 0.0, TAU, FLOW_ORI_BINS)] += 1.0;
    }

    (0..regions)
        .map(|r| {
            if labeling.regions[r].pixel_count == 0 {
                return Err(Error::EmptyRegion(r));
            }
            // untextured regions fall back to unweighted dominant-orientation counts
            let raw = if orient_weighted[r].iter().sum::<f64>() > 0.0 {
                orient_weighted[r]
            } else {
                orient_counts[r]
            };
            let mut orientation = match orientation_bins {
                OrientationBins::Interpolated16 => resample_orientation(&raw),
                OrientationBins::Raw8 => raw.to_vec(),
            };
            let mut h = LowLevelHistograms {
                color: std::mem::take(&mut color[r]),
                lightness: std::mem::take(&mut lightness[r]),
                orientation: Vec::new(),
                flow_mag: std::mem::take(&mut flow_mag[r]),
                flow_ori: std::mem::take(&mut flow_ori[r]),
            };
            normalize(&mut orientation);
            h.orientation = orientation;
            normalize(&mut h.color);
            normalize(&mut h.lightness);
            normalize(&mut h.flow_mag);
            normalize(&mut h.flow_ori);
            Ok(h)
        })
        .collect()
}

/// Chi-square histogram distance `½ Σ (a−b)² / (a+b+ε)`.
pub fn chi_square(h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(Error::BinMismatch(h1.len(), h2.len()));
    }
    Ok(0.5
        * h1.iter()
            .zip(h2)
            .map(|(a, b)| (a - b) * (a - b) / (a + b + CHI_SQUARE_EPS))
            .sum::<f64>())
}

pub fn color_distance(h1: &[f64], h2: &[f64], mode: ColorHistogramMode) -> Result<f64> {
    match mode {
        ColorHistogramMode::Joint => chi_square(h1, h2),
        ColorHistogramMode::PerChannel => {
            if h1.len() != h2.len() {
                return Err(Error::BinMismatch(h1.len(), h2.len()));
            }
            let channels = h1.len() / CHANNEL_BINS;
            let mut total = 0.0;
            for c in 0..channels {
                let range = c * CHANNEL_BINS..(c + 1) * CHANNEL_BINS;
                let a: Vec<f64> = h1[range.clone()].iter().map(|v| v * channels as f64).collect();
                let b: Vec<f64> = h2[range].iter().map(|v| v * channels as f64).collect();
                total += chi_square(&a, &b)?;
            }
            Ok(total / channels.max(1) as f64)
        }
    }
}

/// Per-region, per-feature contrast `Σ_{j≠i} |r_j| ω(i,j) χ²(h_i, h_j)` before
/// weighting, in the order (color, lightness, orientation, flow magnitude,
/// flow orientation). `sizes` are fractions of the frame area.
pub fn low_level_contrast(
    histograms: &[LowLevelHistograms],
    centroids: &[(f64, f64)],
    sizes: &[f64],
    params: &LowLevelParams,
) -> Result<Vec<[f64; 5]>> {
    let n = histograms.len();
    let sigma2 = params.sigma_spdst * params.sigma_spdst;
    let mut out = vec![[0.0; 5]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let (dx, dy) = (centroids[i].0 - centroids[j].0, centroids[i].1 - centroids[j].1);
            let omega = (-(dx * dx + dy * dy) / sigma2).exp();
            let scale = sizes[j] * omega;
            let (hi, hj) = (&histograms[i], &histograms[j]);
            let d = [
                color_distance(&hi.color, &hj.color, params.color_hist)?,
                chi_square(&hi.lightness, &hj.lightness)?,
                chi_square(&hi.orientation, &hj.orientation)?,
                chi_square(&hi.flow_mag, &hj.flow_mag)?,
                chi_square(&hi.flow_ori, &hj.flow_ori)?,
            ];
            for f in 0..5 {
                out[i][f] += scale * d[f];
            }
        }
    }
    Ok(out)
}

/// Weighted sum of the per-feature contrasts, min-max normalized to `[0, 1]`.
pub fn low_level_map(contrast: &[[f64; 5]], weights: &[f64; 5]) -> Vec<f64> {
    let raw: Vec<f64> = contrast
        .iter()
        .map(|c| c.iter().zip(weights).map(|(v, w)| v * w).sum())
        .collect();
    normalize_min_max(&raw, TiePolicy::KeepPositive)
}

/// Convenience wrapper: histograms and contrast for one labeling.
pub fn low_level_for_labeling(
    labeling: &Labeling,
    frame: &LabFrame,
    gabor: &GaborResponse,
    flow: &FlowField,
    params: &LowLevelParams,
) -> Result<(Vec<f64>, Vec<[f64; 5]>)> {
    let hists = region_histograms(labeling, frame, gabor, flow, params.orientation_bins)?;
    let centroids: Vec<_> = labeling.regions.iter().map(|r| r.centroid).collect();
    let total = labeling.pixel_count() as f64;
    let sizes: Vec<_> = labeling
        .regions
        .iter()
        .map(|r| r.pixel_count as f64 / total)
        .collect();
    let contrast = low_level_contrast(&hists, &centroids, &sizes, params)?;
    Ok((low_level_map(&contrast, &params.weights), contrast))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::Plane;

    fn flat_gabor(w: usize, h: usize) -> GaborResponse {
        GaborResponse {
            width: w,
            height: h,
            dominant: vec![0; w * h],
            energy: vec![0.0; w * h],
        }
    }

    #[test]
    fn chi_square_examples() {
        assert_eq!(chi_square(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        assert!((chi_square(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(chi_square(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        assert!(matches!(
            chi_square(&[1.0], &[0.5, 0.5]),
            Err(Error::BinMismatch(1, 2))
        ));
    }

    #[test]
    fn uniform_region_color_histogram_has_four_quarter_bins() {
        let frame = LabFrame::uniform(4, 4, [42.0, 10.0, -20.0], 200.0);
        let lab = Labeling::from_labels(4, 4, vec![0; 16], &[0]);
        let flow = FlowField::zeros(4, 4, 0, 1);
        let h = region_histograms(&lab, &frame, &flat_gabor(4, 4), &flow, OrientationBins::Interpolated16)
            .unwrap();
        let nonzero: Vec<_> = h[0].color.iter().filter(|&&v| v > 0.0).collect();
        assert_eq!(nonzero, vec![&0.25; 4]);
        assert_eq!(h[0].flow_mag[0], 1.0);
        assert_eq!(h[0].flow_ori[0], 1.0);
        for hist in [&h[0].color, &h[0].lightness, &h[0].orientation, &h[0].flow_mag, &h[0].flow_ori] {
            assert!((hist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(h[0].orientation.len(), 16);
        assert_eq!(h[0].flow_ori.len(), 9);
    }

    #[test]
    fn identical_regions_identical_histograms() {
        let frame = LabFrame {
            l: Plane::from_fn(4, 2, |x, _| if x % 2 == 0 { 10.0 } else { 80.0 }),
            ..LabFrame::uniform(4, 2, [0.0, 5.0, 5.0], 30.0)
        };
        let lab = Labeling::from_labels(4, 2, vec![0, 0, 1, 1, 0, 0, 1, 1], &[0, 1]);
        let h = region_histograms(
            &lab,
            &frame,
            &flat_gabor(4, 2),
            &FlowField::zeros(4, 2, 0, 1),
            OrientationBins::Raw8,
        )
        .unwrap();
        assert_eq!(h[0], h[1]);
        assert_eq!(h[0].orientation.len(), 8);
    }

    #[test]
    fn orientation_resampling_interpolates_circularly() {
        let raw = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 3.0];
        let r = resample_orientation(&raw);
        assert_eq!(r[0], 1.0);
        assert_eq!(r[1], 0.5);
        assert_eq!(r[14], 3.0);
        assert_eq!(r[15], 2.0);
    }

    #[test]
    fn equal_content_regions_have_zero_contrast() {
        let h = LowLevelHistograms {
            color: vec![0.25; 4],
            lightness: vec![1.0],
            orientation: vec![1.0],
            flow_mag: vec![1.0],
            flow_ori: vec![1.0],
        };
        let hists = vec![h.clone(), h];
        let c = low_level_contrast(
            &hists,
            &[(0.25, 0.5), (0.75, 0.5)],
            &[0.5, 0.5],
            &LowLevelParams::default(),
        )
        .unwrap();
        assert_eq!(low_level_map(&c, &LowLevelParams::default().weights), vec![0.0, 0.0]);
    }

    #[test]
    fn single_region_has_zero_contrast() {
        let h = LowLevelHistograms {
            color: vec![1.0],
            lightness: vec![1.0],
            orientation: vec![1.0],
            flow_mag: vec![1.0],
            flow_ori: vec![1.0],
        };
        let c = low_level_contrast(&[h], &[(0.5, 0.5)], &[1.0], &LowLevelParams::default()).unwrap();
        assert_eq!(low_level_map(&c, &[0.4, 0.1, 0.1, 0.2, 0.2]), vec![0.0]);
    }

    #[test]
    fn per_channel_mode_matches_joint_on_single_channel_difference() {
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        for c in 0..4 {
            a[c * 16] = 0.25;
            b[c * 16] = 0.25;
        }
        b[0] = 0.0;
        b[1] = 0.25;
        let joint = color_distance(&a, &b, ColorHistogramMode::Joint).unwrap();
        let per = color_distance(&a, &b, ColorHistogramMode::PerChannel).unwrap();
        assert!((joint - 0.25).abs() < 1e-9);
        assert!((per - 0.25).abs() < 1e-9);
    }

    #[test]
    fn percentile_nearest_rank() {
        let v: Vec<f64> = (1..=200).map(|x| x as f64).collect();
        assert_eq!(percentile_99(&v), 198.0);
        assert_eq!(percentile_99(&[0.0, 0.0]), 0.0);
    }

    #[test]
    fn weights_sum_to_one() {
        let w = LowLevelParams::default().weights;
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
