//! In-place 2-D FFT over a row-major complex buffer.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn fft2(buf: &mut [Complex64], width: usize, height: usize, inverse: bool) {
    let mut planner = FftPlanner::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for y in 0..height {
            column[y] = buf[y * width + x];
        }
        col_fft.process(&mut column);
        for y in 0..height {
            buf[y * width + x] = column[y];
        }
    }
    if inverse {
        let scale = 1.0 / (width * height) as f64;
        buf.iter_mut().for_each(|c| *c *= scale);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_dc() {
        let (w, h) = (6, 5);
        let orig: Vec<Complex64> = (0..w * h)
            .map(|i| Complex64::new((i * 7 % 11) as f64, 0.0))
            .collect();
        let mut buf = orig.clone();
        fft2(&mut buf, w, h, false);
        let sum: f64 = orig.iter().map(|c| c.re).sum();
        assert!((buf[0].re - sum).abs() < 1e-9);
        fft2(&mut buf, w, h, true);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-9);
        }
    }
}
