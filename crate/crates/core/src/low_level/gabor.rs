//! Quadrature Gabor filter bank and per-pixel dominant texture orientation.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fft2::fft2;
use crate::raster::Plane;

/// Responses at or below this energy are treated as "no texture".
const ENERGY_FLOOR: f64 = 1e-6;
const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaborParams {
    /// Spatial aspect ratio.
    pub gamma: f64,
    pub wavelength: f64,
    /// Gaussian sigma as a multiple of the wavelength.
    pub sigma_ratio: f64,
    pub orientations: usize,
}

impl Default for GaborParams {
    fn default() -> Self {
        GaborParams {
            gamma: 0.5,
            wavelength: 8.0,
            sigma_ratio: 0.56,
            orientations: 8,
        }
    }
}

impl GaborParams {
    pub fn sigma(&self) -> f64 {
        self.sigma_ratio * self.wavelength
    }
}

/// Even (cosine) and odd (sine) kernels for `θ = kπ/4`, `k = 0..orientations`.
#[derive(Clone, Debug)]
pub struct GaborBank {
    pub params: GaborParams,
    /// Kernel half-size; kernels are `(2 * half + 1)²`, covering ±3σ.
    pub half: usize,
    pub even: Vec<Vec<f64>>,
    pub odd: Vec<Vec<f64>>,
}

impl GaborBank {
    pub fn new(params: GaborParams) -> Self {
        let sigma = params.sigma();
        let half = (3.0 * sigma).ceil() as usize;
        let side = 2 * half + 1;
        let mut even = Vec::with_capacity(params.orientations);
        let mut odd = Vec::with_capacity(params.orientations);
        for k in 0..params.orientations {
            let theta = k as f64 * PI / 4.0;
            let (sin_t, cos_t) = theta.sin_cos();
            let mut e = Vec::with_capacity(side * side);
            let mut o = Vec::with_capacity(side * side);
            for dy in -(half as isize)..=half as isize {
                for dx in -(half as isize)..=half as isize {
                    let (x, y) = (dx as f64, dy as f64);
                    let xr = x * cos_t + y * sin_t;
                    let yr = -x * sin_t + y * cos_t;
                    let envelope = (-(xr * xr + params.gamma * params.gamma * yr * yr)
                        / (2.0 * sigma * sigma))
                        .exp();
                    let phase = 2.0 * PI * yr / params.wavelength;
                    e.push(envelope * phase.cos());
                    o.push(envelope * phase.sin());
                }
            }
            // DC-free even kernel; the odd one is zero-mean by antisymmetry
            let mean = e.iter().sum::<f64>() / e.len() as f64;
            e.iter_mut().for_each(|v| *v -= mean);
            even.push(e);
            odd.push(o);
        }
        GaborBank {
            params,
            half,
            even,
            odd,
        }
    }

    pub fn side(&self) -> usize {
        2 * self.half + 1
    }
}

impl Default for GaborBank {
    fn default() -> Self {
        GaborBank::new(GaborParams::default())
    }
}

/// Per-pixel dominant orientation index and its quadrature energy.
#[derive(Clone, Debug, PartialEq)]
pub struct GaborResponse {
    pub width: usize,
    pub height: usize,
    pub dominant: Vec<u8>,
    pub energy: Vec<f64>,
}

/// Convolves `plane` with every quadrature pair and keeps, per pixel, the
/// orientation of maximal energy `sqrt(even² + odd²)` (ties to lowest index).
pub fn gabor_energy(plane: &Plane, bank: &GaborBank) -> GaborResponse {
    let (w, h) = (plane.width(), plane.height());
    let half = bank.half as isize;
    let pw = w + 2 * bank.half;
    let ph = h + 2 * bank.half;
    let mut spectrum: Vec<Complex64> = (0..pw * ph)
        .map(|i| {
            let x = (i % pw) as isize - half;
            let y = (i / pw) as isize - half;
            Complex64::new(plane.get_clamped(x, y), 0.0)
        })
        .collect();
    fft2(&mut spectrum, pw, ph, false);

    let orientations = bank.even.len();
    let mut energies = vec![vec![0.0; w * h]; orientations];
    let side = bank.side();
    for (k, out) in energies.iter_mut().enumerate() {
        let mut kernel = vec![Complex64::new(0.0, 0.0); pw * ph];
        for ky in 0..side {
            for kx in 0..side {
                let dx = kx as isize - half;
                let dy = ky as isize - half;
                let x = dx.rem_euclid(pw as isize) as usize;
                let y = dy.rem_euclid(ph as isize) as usize;
                kernel[y * pw + x] =
                    Complex64::new(bank.even[k][ky * side + kx], bank.odd[k][ky * side + kx]);
            }
        }
        fft2(&mut kernel, pw, ph, false);
        for (kv, sv) in kernel.iter_mut().zip(&spectrum) {
            *kv *= sv;
        }
        fft2(&mut kernel, pw, ph, true);
        for y in 0..h {
            for x in 0..w {
                let e = kernel[(y + bank.half) * pw + x + bank.half].norm();
                out[y * w + x] = if e <= ENERGY_FLOOR { 0.0 } else { e };
            }
        }
    }

    let mut dominant = vec![0u8; w * h];
    let mut energy = vec![0.0; w * h];
    for i in 0..w * h {
        let max = energies.iter().map(|e| e[i]).fold(0.0, f64::max);
        if max > 0.0 {
            let k = energies
                .iter()
                .position(|e| e[i] >= max * (1.0 - TIE_TOLERANCE))
                .unwrap_or(0);
            dominant[i] = k as u8;
            energy[i] = max;
        }
    }
    GaborResponse {
        width: w,
        height: h,
        dominant,
        energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_geometry_and_symmetry() {
        let bank = GaborBank::default();
        assert_eq!(bank.half, 14); // ceil(3 * 0.56 * 8)
        assert_eq!(bank.side() % 2, 1);
        assert_eq!(bank.even.len(), 8);
        let n = bank.side() * bank.side();
        for k in 0..8 {
            for i in 0..n {
                let mirrored = n - 1 - i;
                assert!((bank.even[k][i] - bank.even[k][mirrored]).abs() < 1e-12);
                assert!((bank.odd[k][i] + bank.odd[k][mirrored]).abs() < 1e-12);
            }
            assert!(bank.even[k].iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn constant_plane_has_no_energy() {
        let out = gabor_energy(&Plane::new(30, 20, 57.0), &GaborBank::default());
        assert!(out.energy.iter().all(|&e| e == 0.0));
        assert!(out.dominant.iter().all(|&d| d == 0));
    }

    #[test]
    fn vertical_stripes_select_vertical_orientation() {
        // intensity varies along x with period 8: stripes run vertically (θ = π/2)
        let plane = Plane::from_fn(64, 48, |x, _| {
            50.0 + 30.0 * (2.0 * PI * x as f64 / 8.0).sin()
        });
        let out = gabor_energy(&plane, &GaborBank::default());
        for y in 16..32 {
            for x in 16..48 {
                assert_eq!(out.dominant[y * 64 + x], 2, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn deterministic() {
        let plane = Plane::from_fn(20, 20, |x, y| ((x * 31 + y * 17) % 23) as f64);
        let bank = GaborBank::default();
        assert_eq!(gabor_energy(&plane, &bank), gabor_energy(&plane, &bank));
    }
}
