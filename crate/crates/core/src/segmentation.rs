//! Multiscale temporal superpixels: SLIC clustering per frame, with cluster
//! centers propagated along optical flow so that regions keep a track id
//! across frames.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{ImageBuffer, Luma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::frame_io::LabFrame;
use crate::raster::Plane;

/// Track id placeholder for regions grown from a fresh (unpropagated) seed.
pub const UNTRACKED: u64 = u64::MAX;

const DRIFT_TOLERANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicParams {
    pub compactness: f64,
    pub iterations: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        SlicParams {
            compactness: 10.0,
            iterations: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    pub id: usize,
    pub pixel_count: usize,
    /// Centroid in normalized `[0, 1]²` frame coordinates.
    pub centroid: (f64, f64),
    pub track_id: u64,
}

/// A partition of one frame into 4-connected regions with dense ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Labeling {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
    pub regions: Vec<Region>,
}

/// Initial cluster center, in pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Seed {
    pub x: f64,
    pub y: f64,
    pub track_id: Option<u64>,
    /// Initial center color; sampled at the seed position when absent.
    pub color: Option<[f64; 3]>,
}

impl Labeling {
    /// Builds region statistics from a dense label map.
    pub fn from_labels(width: usize, height: usize, labels: Vec<u32>, track_ids: &[u64]) -> Self {
        let count = track_ids.len();
        let mut sums = vec![(0usize, 0.0f64, 0.0f64); count];
        for (i, &label) in labels.iter().enumerate() {
            let s = &mut sums[label as usize];
            s.0 += 1;
            s.1 += (i % width) as f64;
            s.2 += (i / width) as f64;
        }
        let regions = sums
            .iter()
            .zip(track_ids)
            .enumerate()
            .map(|(id, (&(n, sx, sy), &track_id))| {
                let (mx, my) = if n > 0 {
                    (sx / n as f64, sy / n as f64)
                } else {
                    (0.0, 0.0)
                };
                Region {
                    id,
                    pixel_count: n,
                    centroid: ((mx + 0.5) / width as f64, (my + 0.5) / height as f64),
                    track_id,
                }
            })
            .collect();
        Labeling {
            width,
            height,
            labels,
            regions,
        }
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.labels.len()
    }

    /// Region centroid in pixel coordinates.
    pub fn pixel_centroid(&self, id: usize) -> (f64, f64) {
        let (cx, cy) = self.regions[id].centroid;
        (
            cx * self.width as f64 - 0.5,
            cy * self.height as f64 - 0.5,
        )
    }

    /// Mean of `plane` over every region.
    pub fn region_means(&self, plane: &Plane) -> Vec<f64> {
        let mut sums = vec![0.0; self.region_count()];
        for (&label, &value) in self.labels.iter().zip(plane.data()) {
            sums[label as usize] += value;
        }
        sums.iter()
            .zip(&self.regions)
            .map(|(s, r)| s / r.pixel_count.max(1) as f64)
            .collect()
    }

    /// Pixel indices of each region, in raster order.
    pub fn region_pixels(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .regions
            .iter()
            .map(|r| Vec::with_capacity(r.pixel_count))
            .collect();
        for (i, &label) in self.labels.iter().enumerate() {
            out[label as usize].push(i);
        }
        out
    }

    /// Regions owning at least one pixel on the outer 1-px frame ring.
    pub fn border_regions(&self) -> Vec<bool> {
        let mut border = vec![false; self.region_count()];
        let (w, h) = (self.width, self.height);
        for x in 0..w {
            border[self.labels[x] as usize] = true;
            border[self.labels[(h - 1) * w + x] as usize] = true;
        }
        for y in 0..h {
            border[self.labels[y * w] as usize] = true;
            border[self.labels[y * w + w - 1] as usize] = true;
        }
        border
    }

    /// Replaces [`UNTRACKED`] ids with fresh ones drawn from `next_track`.
    pub fn assign_fresh_tracks(&mut self, next_track: &mut u64) {
        for region in &mut self.regions {
            if region.track_id == UNTRACKED {
                region.track_id = *next_track;
                *next_track += 1;
            }
        }
    }

    /// 16-bit grayscale PNG of region ids.
    pub fn write_label_png(&self, path: &Path) -> Result<()> {
        let data: Vec<u16> = self
            .labels
            .iter()
            .map(|&l| u16::try_from(l).unwrap_or(u16::MAX))
            .collect();
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, data)
                .expect("buffer matches dimensions");
        img.save(path).map_err(|e| Error::image(path, e))
    }

    pub fn region_table_csv(&self) -> String {
        let mut out = String::from("id,size,cx,cy,track_id\n");
        for r in &self.regions {
            let _ = writeln!(
                out,
                "{},{},{:.6},{:.6},{}",
                r.id, r.pixel_count, r.centroid.0, r.centroid.1, r.track_id
            );
        }
        out
    }

    pub fn write_region_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.region_table_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Regular grid of roughly `k` centers with cells matching the frame aspect.
pub fn grid_seeds(width: usize, height: usize, k: usize) -> Vec<(f64, f64)> {
    let k = k.max(1);
    let nx = ((k as f64 * width as f64 / height as f64).sqrt().round() as usize).clamp(1, width);
    let ny = ((k as f64 / nx as f64).round() as usize).clamp(1, height);
    let cw = width as f64 / nx as f64;
    let ch = height as f64 / ny as f64;
    let mut seeds = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            seeds.push(((i as f64 + 0.5) * cw - 0.5, (j as f64 + 0.5) * ch - 0.5));
        }
    }
    seeds
}

#[derive(Clone, Copy)]
struct Center {
    color: [f64; 3],
    x: f64,
    y: f64,
    alive: bool,
}

const NONE: u32 = u32::MAX;

/// SLIC superpixels in `(L, a, b, x, y)` space.
///
/// Without `seeds` the centers start on a regular grid of about `k` cells.
/// Grid-seeded regions get track ids equal to their cluster index; seeded
/// regions inherit the seed's track id or [`UNTRACKED`].
pub fn slic_segment(
    frame: &LabFrame,
    k: usize,
    params: &SlicParams,
    seeds: Option<&[Seed]>,
) -> Result<Labeling> {
    if k < 1 {
        return Err(Error::InvalidK(k));
    }
    let (w, h) = (frame.width(), frame.height());
    let n = w * h;
    let owned_seeds: Vec<Seed>;
    let seeds = match seeds {
        Some(s) if !s.is_empty() => s,
        _ => {
            owned_seeds = grid_seeds(w, h, k.min(n))
                .into_iter()
                .enumerate()
                .map(|(i, (x, y))| Seed {
                    x,
                    y,
                    track_id: Some(i as u64),
                    color: None,
                })
                .collect();
            &owned_seeds
        }
    };
    let color_at = |i: usize| [frame.l.data()[i], frame.a.data()[i], frame.b.data()[i]];

    let mut centers: Vec<Center> = seeds
        .iter()
        .map(|s| {
            let px = s.x.round().clamp(0.0, (w - 1) as f64) as usize;
            let py = s.y.round().clamp(0.0, (h - 1) as f64) as usize;
            Center {
                color: s.color.unwrap_or_else(|| color_at(py * w + px)),
                x: s.x,
                y: s.y,
                alive: true,
            }
        })
        .collect();

    let step = (n as f64 / centers.len() as f64).sqrt().max(1.0);
    let radius = step.ceil() as isize + 1;
    let spatial_weight = (params.compactness / step).powi(2);
    let distance = |c: &Center, i: usize| {
        let col = color_at(i);
        let dc = (col[0] - c.color[0]).powi(2)
            + (col[1] - c.color[1]).powi(2)
            + (col[2] - c.color[2]).powi(2);
        let dx = (i % w) as f64 - c.x;
        let dy = (i / w) as f64 - c.y;
        dc + (dx * dx + dy * dy) * spatial_weight
    };

    let mut labels = vec![NONE; n];
    let mut dist = vec![f64::INFINITY; n];
    for _ in 0..params.iterations.max(1) {
        labels.fill(NONE);
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate().filter(|(_, c)| c.alive) {
            let x0 = (c.x.round() as isize - radius).max(0) as usize;
            let x1 = (c.x.round() as isize + radius).min(w as isize - 1);
            let y0 = (c.y.round() as isize - radius).max(0) as usize;
            let y1 = (c.y.round() as isize + radius).min(h as isize - 1);
            if x1 < 0 || y1 < 0 {
                continue;
            }
            for y in y0..=y1 as usize {
                for x in x0..=x1 as usize {
                    let i = y * w + x;
                    let d = distance(c, i);
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        for i in 0..n {
            if labels[i] == NONE {
                for (ci, c) in centers.iter().enumerate().filter(|(_, c)| c.alive) {
                    let d = distance(c, i);
                    if d < dist[i] {
                        dist[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (i, &label) in labels.iter().enumerate() {
            let col = color_at(i);
            let a = &mut acc[label as usize];
            a[0] += col[0];
            a[1] += col[1];
            a[2] += col[2];
            a[3] += (i % w) as f64;
            a[4] += (i / w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] == 0.0 {
                c.alive = false;
            } else {
                c.color = [a[0] / a[5], a[1] / a[5], a[2] / a[5]];
                c.x = a[3] / a[5];
                c.y = a[4] / a[5];
            }
        }
    }

    let cluster_of = enforce_connectivity(w, h, &labels, centers.len());
    // dense ids in cluster order
    let mut dense = vec![NONE; centers.len()];
    let mut tracks = Vec::new();
    let mut present = vec![false; centers.len()];
    for &c in &cluster_of {
        present[c as usize] = true;
    }
    for (c, &p) in present.iter().enumerate() {
        if p {
            dense[c] = tracks.len() as u32;
            tracks.push(seeds[c].track_id.unwrap_or(UNTRACKED));
        }
    }
    let labels = cluster_of.iter().map(|&c| dense[c as usize]).collect();
    Ok(Labeling::from_labels(w, h, labels, &tracks))
}

/// Splits clusters into 4-connected components, keeps each cluster's largest
/// component and merges the remaining fragments into their largest
/// neighboring component. Returns the final cluster index of every pixel.
fn enforce_connectivity(w: usize, h: usize, labels: &[u32], clusters: usize) -> Vec<u32> {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let label = labels[start];
        comp[start] = id;
        queue.push_back(start);
        let mut size = 0;
        while let Some(p) = queue.pop_front() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if comp[q] == usize::MAX && labels[q] == label {
                    comp[q] = id;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        comp_label.push(label);
        comp_size.push(size);
    }

    let comps = comp_label.len();
    let mut main = vec![usize::MAX; clusters];
    for c in 0..comps {
        let l = comp_label[c] as usize;
        if main[l] == usize::MAX || comp_size[c] > comp_size[main[l]] {
            main[l] = c;
        }
    }
    let mut orphans: Vec<usize> = (0..comps)
        .filter(|&c| main[comp_label[c] as usize] != c)
        .collect();
    if orphans.is_empty() {
        return labels.to_vec();
    }

    let mut neighbors = vec![BTreeSet::new(); comps];
    for p in 0..n {
        let (x, y) = (p % w, p / w);
        if x + 1 < w && comp[p] != comp[p + 1] {
            neighbors[comp[p]].insert(comp[p + 1]);
            neighbors[comp[p + 1]].insert(comp[p]);
        }
        if y + 1 < h && comp[p] != comp[p + w] {
            neighbors[comp[p]].insert(comp[p + w]);
            neighbors[comp[p + w]].insert(comp[p]);
        }
    }

    let mut parent: Vec<usize> = (0..comps).collect();
    let mut size = comp_size.clone();
    fn find(parent: &mut [usize], mut c: usize) -> usize {
        while parent[c] != c {
            parent[c] = parent[parent[c]];
            c = parent[c];
        }
        c
    }
    orphans.sort_by_key(|&c| (comp_size[c], c));
    for o in orphans {
        let root = find(&mut parent, o);
        if root != o {
            continue;
        }
        let mut best: Option<usize> = None;
        // neighbors of the whole merged set, so enclosed fragments still find a way out
        for &nb in &neighbors[root] {
            let r = find(&mut parent, nb);
            if r == root {
                continue;
            }
            best = match best {
                Some(b) if size[b] > size[r] || (size[b] == size[r] && b < r) => Some(b),
                _ => Some(r),
            };
        }
        if let Some(target) = best {
            parent[root] = target;
            size[target] += size[root];
            let moved = std::mem::take(&mut neighbors[root]);
            neighbors[target].extend(moved);
        }
    }
    (0..n)
        .map(|p| {
            let r = find(&mut parent, comp[p]);
            comp_label[r]
        })
        .collect()
}

/// Moves each region's centroid along its mean flow to seed the next frame.
///
/// Seeds are clamped one pixel inside the frame. When two displaced seeds
/// land within one pixel of each other the larger region keeps its seed and
/// the smaller one is replaced by the free grid position farthest from all
/// other seeds, without a track id.
pub fn propagate_seeds(prev: &Labeling, flow: &FlowField) -> Vec<Seed> {
    assert_eq!(
        (flow.width(), flow.height()),
        (prev.width, prev.height),
        "flow must match labeling dimensions"
    );
    let (w, h) = (prev.width, prev.height);
    let mean_u = prev.region_means(&flow.u);
    let mean_v = prev.region_means(&flow.v);
    let clamp = |value: f64, len: usize| {
        if len >= 3 {
            value.clamp(1.0, (len - 2) as f64)
        } else {
            value.clamp(0.0, (len - 1) as f64)
        }
    };
    let displaced: Vec<(f64, f64)> = (0..prev.region_count())
        .map(|id| {
            let (cx, cy) = prev.pixel_centroid(id);
            (clamp(cx + mean_u[id], w), clamp(cy + mean_v[id], h))
        })
        .collect();

    let mut order: Vec<usize> = (0..prev.region_count()).collect();
    order.sort_by_key(|&id| (std::cmp::Reverse(prev.regions[id].pixel_count), id));
    let mut accepted = vec![false; prev.region_count()];
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for &id in &order {
        let (x, y) = displaced[id];
        if kept
            .iter()
            .all(|&(kx, ky)| (kx - x).hypot(ky - y) >= 1.0)
        {
            accepted[id] = true;
            kept.push((x, y));
        }
    }

    let mut seeds: Vec<Seed> = (0..prev.region_count())
        .filter(|&id| accepted[id])
        .map(|id| Seed {
            x: displaced[id].0,
            y: displaced[id].1,
            track_id: Some(prev.regions[id].track_id),
            color: None,
        })
        .collect();
    let rejected = accepted.iter().filter(|&&a| !a).count();
    if rejected > 0 {
        let grid = grid_seeds(w, h, prev.region_count());
        for _ in 0..rejected {
            let best = grid
                .iter()
                .map(|&(gx, gy)| {
                    let nearest = seeds
                        .iter()
                        .map(|s| (s.x - gx).hypot(s.y - gy))
                        .fold(f64::INFINITY, f64::min);
                    (nearest, gx, gy)
                })
                .fold(None, |best: Option<(f64, f64, f64)>, cand| match best {
                    Some(b) if b.0 >= cand.0 => Some(b),
                    _ => Some(cand),
                });
            if let Some((d, gx, gy)) = best {
                if d < 1.0 {
                    break;
                }
                seeds.push(Seed {
                    x: gx,
                    y: gy,
                    track_id: None,
                    color: None,
                });
            }
        }
    }
    seeds
}

/// Labelings for every scale and frame.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiscaleLabeling {
    pub scale_targets: Vec<usize>,
    /// `scales[l][t]` is the labeling of frame `t` at scale `l`.
    pub scales: Vec<Vec<Labeling>>,
}

impl MultiscaleLabeling {
    pub fn levels(&self) -> usize {
        self.scales.len()
    }
}

/// Target superpixel counts for a frame of `pixels` pixels, finest first.
pub fn default_scale_targets(pixels: usize) -> Vec<usize> {
    [300, 600, 1200]
        .iter()
        .map(|&d| pixels.div_ceil(d).max(1))
        .collect()
}

fn segment_chain(
    frames: &[LabFrame],
    flows: &[FlowField],
    target: usize,
    params: &SlicParams,
) -> Result<Vec<Labeling>> {
    let mut chain: Vec<Labeling> = Vec::with_capacity(frames.len());
    let mut next_track = 0u64;
    for (t, frame) in frames.iter().enumerate() {
        let mut labeling = match chain.last() {
            None => slic_segment(frame, target, params, None)?,
            Some(prev) => {
                let mut seeds = propagate_seeds(prev, &flows[t - 1]);
                // tracked centers start from their region's mean color in the previous frame
                let prev_frame = &frames[t - 1];
                let means = [&prev_frame.l, &prev_frame.a, &prev_frame.b].map(|c| prev.region_means(c));
                let by_track: HashMap<u64, usize> =
                    prev.regions.iter().map(|r| (r.track_id, r.id)).collect();
                for seed in &mut seeds {
                    if let Some(&id) = seed.track_id.and_then(|t| by_track.get(&t)) {
                        seed.color = Some([means[0][id], means[1][id], means[2][id]]);
                    }
                }
                let candidate = slic_segment(frame, target, params, Some(&seeds))?;
                let drift = (candidate.region_count() as f64 - target as f64).abs() / target as f64;
                if drift > DRIFT_TOLERANCE {
                    log::info!(
                        "frame {t}: {} regions vs target {target}, reseeding from grid",
                        candidate.region_count()
                    );
                    let mut fresh = slic_segment(frame, target, params, None)?;
                    for r in &mut fresh.regions {
                        r.track_id = UNTRACKED;
                    }
                    fresh
                } else {
                    candidate
                }
            }
        };
        if t == 0 {
            next_track = labeling.region_count() as u64;
        } else {
            labeling.assign_fresh_tracks(&mut next_track);
        }
        chain.push(labeling);
    }
    Ok(chain)
}

/// Segments every frame at every scale; scales are processed in parallel.
pub fn segment_video(
    frames: &[LabFrame],
    flows: &[FlowField],
    scale_targets: &[usize],
    params: &SlicParams,
) -> Result<MultiscaleLabeling> {
    if !frames.is_empty() {
        assert_eq!(flows.len() + 1, frames.len(), "need one flow per frame pair");
    }
    let scales = scale_targets
        .par_iter()
        .map(|&k| segment_chain(frames, flows, k, params))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiscaleLabeling {
        scale_targets: scale_targets.to_vec(),
        scales,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Undirected region adjacency graph weighted by mean Lab color distance.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionGraph {
    pub node_count: usize,
    pub edges: Vec<Edge>,
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

impl RegionGraph {
    pub fn from_edges(node_count: usize, edges: Vec<Edge>) -> Self {
        let mut neighbors = vec![Vec::new(); node_count];
        for e in &edges {
            neighbors[e.a].push((e.b, e.weight));
            neighbors[e.b].push((e.a, e.weight));
        }
        RegionGraph {
            node_count,
            edges,
            neighbors,
        }
    }
}

pub fn adjacency(labeling: &Labeling, frame: &LabFrame) -> RegionGraph {
    let (w, h) = (labeling.width, labeling.height);
    let mut pairs = BTreeSet::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let a = labeling.labels[p];
            if x + 1 < w && labeling.labels[p + 1] != a {
                let b = labeling.labels[p + 1];
                pairs.insert((a.min(b) as usize, a.max(b) as usize));
            }
            if y + 1 < h && labeling.labels[p + w] != a {
                let b = labeling.labels[p + w];
                pairs.insert((a.min(b) as usize, a.max(b) as usize));
            }
        }
    }
    let l = labeling.region_means(&frame.l);
    let a = labeling.region_means(&frame.a);
    let b = labeling.region_means(&frame.b);
    let edges = pairs
        .into_iter()
        .map(|(i, j)| Edge {
            a: i,
            b: j,
            weight: ((l[i] - l[j]).powi(2) + (a[i] - a[j]).powi(2) + (b[i] - b[j]).powi(2)).sqrt(),
        })
        .collect();
    RegionGraph::from_edges(labeling.region_count(), edges)
}
