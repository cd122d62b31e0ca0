//! Region-level cues: center bias, objectness, boundary-connectivity
//! background prior and movement, and their weighted combination.

mod objectness;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

pub use objectness::{
    load_objectness, objectness, spectral_residual, window_posterior, ObjectnessMap,
    ObjectnessParams, ObjectnessSource,
};

use crate::raster::{normalize_min_max, Plane, TiePolicy};
use crate::segmentation::{Labeling, RegionGraph};

/// Boundary-connectivity formulation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BndConMode {
    /// Geodesic distances pass through `exp(-d² / 2σ²)` before summation.
    #[default]
    Soft,
    /// Raw geodesic distances are summed.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MidLevelParams {
    /// Weights for (center, objectness, background, movement).
    pub weights: [f64; 4],
    pub sigma_cen: f64,
    pub sigma_bgr: f64,
    pub sigma_clr: f64,
    pub bndcon: BndConMode,
    pub objectness: ObjectnessParams,
}

impl Default for MidLevelParams {
    fn default() -> Self {
        MidLevelParams {
            weights: [0.15, 0.05, 0.4, 0.4],
            sigma_cen: 0.3,
            sigma_bgr: 1.0,
            sigma_clr: 10.0,
            bndcon: BndConMode::Soft,
            objectness: ObjectnessParams::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MidLevelScores {
    pub center: f64,
    pub objectness: f64,
    pub background: f64,
    pub movement: f64,
}

/// Per-pixel center weight `exp(-D²/σ²)`; distances are scaled so the
/// frame half-diagonal (center to corner pixel) is 1.
pub fn center_bias_map(width: usize, height: usize, sigma: f64) -> Plane {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let half_diag = cx.hypot(cy);
    Plane::from_fn(width, height, |x, y| {
        let d = if half_diag > 0.0 {
            (x as f64 - cx).hypot(y as f64 - cy) / half_diag
        } else {
            0.0
        };
        (-(d * d) / (sigma * sigma)).exp()
    })
}

/// Mean center weight over the region's pixel indices.
pub fn center_bias(pixels: &[usize], width: usize, height: usize, sigma: f64) -> f64 {
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let half_diag = cx.hypot(cy);
    let total: f64 = pixels
        .iter()
        .map(|&i| {
            let (x, y) = ((i % width) as f64, (i / width) as f64);
            let d = if half_diag > 0.0 {
                (x - cx).hypot(y - cy) / half_diag
            } else {
                0.0
            };
            (-(d * d) / (sigma * sigma)).exp()
        })
        .sum();
    total / pixels.len().max(1) as f64
}

/// Mean objectness of each region.
pub fn region_objectness(labeling: &Labeling, map: &ObjectnessMap) -> Vec<f64> {
    labeling.region_means(&map.values)
}

#[derive(Clone, Copy, PartialEq)]
struct QueueItem {
    cost: f64,
    node: usize,
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Single-source shortest path costs; unreachable nodes are `+∞`.
pub fn dijkstra(graph: &RegionGraph, source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; graph.node_count];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(QueueItem {
        cost: 0.0,
        node: source,
    });
    while let Some(QueueItem { cost, node }) = heap.pop() {
        if cost > dist[node] {
            continue;
        }
        for &(next, weight) in &graph.neighbors[node] {
            let candidate = cost + weight;
            if candidate < dist[next] {
                dist[next] = candidate;
                heap.push(QueueItem {
                    cost: candidate,
                    node: next,
                });
            }
        }
    }
    dist
}

/// All-pairs geodesic distances.
pub fn geodesic_distances(graph: &RegionGraph) -> Vec<Vec<f64>> {
    (0..graph.node_count).map(|s| dijkstra(graph, s)).collect()
}

/// Background probability `exp(-BndCon² / 2σ_bgr²)` from geodesic distances
/// and the set of regions touching the frame border.
pub fn background_prior_from_distances(
    geodesic: &[Vec<f64>],
    border: &[bool],
    params: &MidLevelParams,
) -> Vec<f64> {
    let two_clr2 = 2.0 * params.sigma_clr * params.sigma_clr;
    let two_bgr2 = 2.0 * params.sigma_bgr * params.sigma_bgr;
    geodesic
        .iter()
        .map(|row| {
            let contribution = |d: f64| match params.bndcon {
                BndConMode::Soft => (-(d * d) / two_clr2).exp(),
                BndConMode::Literal if d.is_finite() => d,
                BndConMode::Literal => 0.0,
            };
            let len_bnd: f64 = row
                .iter()
                .zip(border)
                .filter(|(_, &b)| b)
                .map(|(&d, _)| contribution(d))
                .sum();
            let span: f64 = row.iter().map(|&d| contribution(d)).sum();
            let bndcon = if span > 0.0 { len_bnd / span.sqrt() } else { 0.0 };
            (-(bndcon * bndcon) / two_bgr2).exp()
        })
        .collect()
}

pub fn background_prior(graph: &RegionGraph, labeling: &Labeling, params: &MidLevelParams) -> Vec<f64> {
    background_prior_from_distances(&geodesic_distances(graph), &labeling.border_regions(), params)
}

/// Mean flow magnitude per region, min-max normalized (all-equal → 0).
pub fn movement(labeling: &Labeling, magnitude: &Plane) -> Vec<f64> {
    normalize_min_max(&labeling.region_means(magnitude), TiePolicy::Zero)
}

/// Weighted cue sum, min-max normalized to `[0, 1]`.
pub fn mid_level_map(scores: &[MidLevelScores], weights: &[f64; 4]) -> Vec<f64> {
    let raw: Vec<f64> = scores
        .iter()
        .map(|s| {
            weights[0] * s.center
                + weights[1] * s.objectness
                + weights[2] * s.background
                + weights[3] * s.movement
        })
        .collect();
    normalize_min_max(&raw, TiePolicy::KeepPositive)
}
