//! Dense optical flow by coarse-to-fine Horn–Schunck on the luminance plane.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::Plane;

const MIN_PYRAMID_SIDE: usize = 8;
const FLO_MAGIC: &[u8; 4] = b"FLO1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub scale_factor: f64,
    pub smoothness_alpha: f64,
    pub iterations_per_level: usize,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_levels: 3,
            scale_factor: 0.5,
            smoothness_alpha: 15.0,
            iterations_per_level: 100,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if self.pyramid_levels < 1 {
            return Err(Error::Config("flow.pyramid_levels must be >= 1".into()));
        }
        if !(self.scale_factor > 0.0 && self.scale_factor < 1.0) {
            return Err(Error::Config("flow.scale_factor must be in (0, 1)".into()));
        }
        if self.iterations_per_level < 1 {
            return Err(Error::Config("flow.iterations_per_level must be >= 1".into()));
        }
        if !(self.smoothness_alpha > 0.0) {
            return Err(Error::Config("flow.smoothness_alpha must be > 0".into()));
        }
        Ok(())
    }
}

/// Per-pixel displacement (pixels/frame) from frame `from_index` to `to_index`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub u: Plane,
    pub v: Plane,
    pub from_index: usize,
    pub to_index: usize,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize, from_index: usize, to_index: usize) -> Self {
        FlowField {
            u: Plane::new(width, height, 0.0),
            v: Plane::new(width, height, 0.0),
            from_index,
            to_index,
        }
    }

    pub fn uniform(width: usize, height: usize, u: f64, v: f64) -> Self {
        FlowField {
            u: Plane::new(width, height, u),
            v: Plane::new(width, height, v),
            from_index: 0,
            to_index: 1,
        }
    }

    pub fn width(&self) -> usize {
        self.u.width()
    }

    pub fn height(&self) -> usize {
        self.u.height()
    }

    /// Writes the `FLO1` debug format: magic, u32 width, u32 height, then the
    /// u plane and the v plane as little-endian f32, row-major.
    pub fn write_flo(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(12 + 8 * self.u.len());
        buf.extend_from_slice(FLO_MAGIC);
        buf.extend_from_slice(&(self.width() as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height() as u32).to_le_bytes());
        for plane in [&self.u, &self.v] {
            for &value in plane.data() {
                buf.extend_from_slice(&(value as f32).to_le_bytes());
            }
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&buf).map_err(|e| Error::io(path, e))
    }

    pub fn read_flo(path: &Path) -> Result<FlowField> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 12 || &bytes[..4] != FLO_MAGIC {
            return Err(Error::FlowFormat("missing FLO1 header".into()));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let n = width * height;
        if bytes.len() != 12 + 8 * n {
            return Err(Error::FlowFormat(format!(
                "expected {} payload bytes, found {}",
                8 * n,
                bytes.len() - 12
            )));
        }
        let floats: Vec<f64> = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let (u, v) = floats.split_at(n);
        Ok(FlowField {
            u: Plane::from_vec(width, height, u.to_vec()),
            v: Plane::from_vec(width, height, v.to_vec()),
            from_index: 0,
            to_index: 1,
        })
    }
}

fn pyramid_sigma(scale_factor: f64) -> f64 {
    0.5 * (1.0 / (scale_factor * scale_factor) - 1.0).sqrt()
}

fn scaled_len(len: usize, scale_factor: f64) -> usize {
    ((len as f64 * scale_factor).round() as usize).max(1)
}

/// Gaussian pyramid; level 0 is the input. Levels whose smaller side would
/// drop below 8 pixels are not built.
pub fn build_pyramid(plane: &Plane, levels: usize, scale_factor: f64) -> Vec<Plane> {
    let mut pyramid = vec![plane.clone()];
    let sigma = pyramid_sigma(scale_factor);
    while pyramid.len() < levels.max(1) {
        let last = pyramid.last().unwrap();
        let w = scaled_len(last.width(), scale_factor);
        let h = scaled_len(last.height(), scale_factor);
        if w.min(h) < MIN_PYRAMID_SIDE {
            break;
        }
        let next = last.gaussian_blur(sigma).resize(w, h);
        pyramid.push(next);
    }
    pyramid
}

/// Fourth-order central differences with replicate edges.
fn gradients(plane: &Plane) -> (Plane, Plane) {
    let d = |p: &Plane, x: isize, y: isize, dx: isize, dy: isize| {
        (-p.get_clamped(x + 2 * dx, y + 2 * dy) + 8.0 * p.get_clamped(x + dx, y + dy)
            - 8.0 * p.get_clamped(x - dx, y - dy)
            + p.get_clamped(x - 2 * dx, y - 2 * dy))
            / 12.0
    };
    let gx = Plane::from_fn(plane.width(), plane.height(), |x, y| {
        d(plane, x as isize, y as isize, 1, 0)
    });
    let gy = Plane::from_fn(plane.width(), plane.height(), |x, y| {
        d(plane, x as isize, y as isize, 0, 1)
    });
    (gx, gy)
}

fn warp(plane: &Plane, u: &Plane, v: &Plane) -> Plane {
    Plane::from_fn(plane.width(), plane.height(), |x, y| {
        plane.sample_bilinear(x as f64 + u.get(x, y), y as f64 + v.get(x, y))
    })
}

/// Horn–Schunck neighborhood average (1/6 edge, 1/12 corner neighbors).
fn local_average(p: &Plane) -> Plane {
    Plane::from_fn(p.width(), p.height(), |x, y| {
        let (x, y) = (x as isize, y as isize);
        let edges = p.get_clamped(x - 1, y)
            + p.get_clamped(x + 1, y)
            + p.get_clamped(x, y - 1)
            + p.get_clamped(x, y + 1);
        let corners = p.get_clamped(x - 1, y - 1)
            + p.get_clamped(x + 1, y - 1)
            + p.get_clamped(x - 1, y + 1)
            + p.get_clamped(x + 1, y + 1);
        edges / 6.0 + corners / 12.0
    })
}

fn refine_level(prev: &Plane, next: &Plane, u: &mut Plane, v: &mut Plane, params: &FlowParams) {
    let warped = warp(next, u, v);
    let mean = Plane::from_vec(
        prev.width(),
        prev.height(),
        prev.data()
            .iter()
            .zip(warped.data())
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    );
    let (ix, iy) = gradients(&mean);
    let alpha2 = params.smoothness_alpha * params.smoothness_alpha;
    let u0 = u.clone();
    let v0 = v.clone();
    for _ in 0..params.iterations_per_level {
        let ubar = local_average(u);
        let vbar = local_average(v);
        for i in 0..prev.len() {
            let gx = ix.data()[i];
            let gy = iy.data()[i];
            let it = warped.data()[i] - prev.data()[i];
            let ub = ubar.data()[i];
            let vb = vbar.data()[i];
            let residual =
                (gx * (ub - u0.data()[i]) + gy * (vb - v0.data()[i]) + it) / (alpha2 + gx * gx + gy * gy);
            u.data_mut()[i] = ub - gx * residual;
            v.data_mut()[i] = vb - gy * residual;
        }
    }
}

/// Coarse-to-fine Horn–Schunck flow from `prev` to `next`.
pub fn estimate_flow(prev: &Plane, next: &Plane, params: &FlowParams) -> FlowField {
    assert!(prev.same_dims(next), "flow inputs must share dimensions");
    let prev_pyr = build_pyramid(prev, params.pyramid_levels, params.scale_factor);
    let next_pyr = build_pyramid(next, prev_pyr.len(), params.scale_factor);
    let coarsest = prev_pyr.last().unwrap();
    let mut u = Plane::new(coarsest.width(), coarsest.height(), 0.0);
    let mut v = u.clone();
    for level in (0..prev_pyr.len()).rev() {
        let (p, n) = (&prev_pyr[level], &next_pyr[level]);
        if !u.same_dims(p) {
            let sx = p.width() as f64 / u.width() as f64;
            let sy = p.height() as f64 / u.height() as f64;
            u = u.resize(p.width(), p.height()).map(|x| x * sx);
            v = v.resize(p.width(), p.height()).map(|y| y * sy);
        }
        refine_level(p, n, &mut u, &mut v, params);
    }
    for value in u.data_mut().iter_mut().chain(v.data_mut().iter_mut()) {
        if !value.is_finite() {
            *value = 0.0;
        }
    }
    FlowField {
        u,
        v,
        from_index: 0,
        to_index: 1,
    }
}

pub fn flow_magnitude(flow: &FlowField) -> Plane {
    Plane::from_vec(
        flow.width(),
        flow.height(),
        flow.u
            .data()
            .iter()
            .zip(flow.v.data())
            .map(|(u, v)| u.hypot(*v))
            .collect(),
    )
}

/// Flow direction in `[0, 2π)`; zero vectors map to 0.
pub fn flow_orientation(flow: &FlowField) -> Plane {
    Plane::from_vec(
        flow.width(),
        flow.height(),
        flow.u
            .data()
            .iter()
            .zip(flow.v.data())
            .map(|(&u, &v)| orientation(u, v))
            .collect(),
    )
}

#[inline]
pub fn orientation(u: f64, v: f64) -> f64 {
    if u == 0.0 && v == 0.0 {
        return 0.0;
    }
    let angle = v.atan2(u).rem_euclid(TAU);
    if angle >= TAU {
        0.0
    } else {
        angle
    }
}
