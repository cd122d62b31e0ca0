//! Frame sequences, ground-truth masks, color conversion and saliency rasters.
//!
//! Datasets are laid out as `<root>/<video>/frames/*.png` with optional
//! ground truth under `<root>/<video>/gt/` sharing the frame file stems.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};

use crate::error::{Error, Result};
use crate::raster::Plane;

pub type SaliencyMap = Plane;

pub const FRAMES_DIR: &str = "frames";
pub const GT_DIR: &str = "gt";
pub const DEFAULT_PATTERN: &str = "*";

/// One decoded RGB frame.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub index: usize,
    /// File stem the frame was loaded from (used to name outputs).
    pub name: String,
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<u8>,
}

impl Frame {
    pub fn from_rgb(index: usize, name: impl Into<String>, width: usize, height: usize, rgb: Vec<u8>) -> Self {
        assert_eq!(rgb.len(), width * height * 3, "rgb buffer size mismatch");
        Frame {
            index,
            name: name.into(),
            width,
            height,
            rgb,
        }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }
}

/// CIELAB planes plus HSV hue (degrees) derived from a [`Frame`].
#[derive(Clone, Debug, PartialEq)]
pub struct LabFrame {
    pub l: Plane,
    pub a: Plane,
    pub b: Plane,
    pub hue: Plane,
}

impl LabFrame {
    pub fn width(&self) -> usize {
        self.l.width()
    }

    pub fn height(&self) -> usize {
        self.l.height()
    }

    pub fn pixel_count(&self) -> usize {
        self.l.len()
    }

    /// Builds a frame whose every pixel has the same Lab color and hue.
    pub fn uniform(width: usize, height: usize, lab: [f64; 3], hue: f64) -> Self {
        LabFrame {
            l: Plane::new(width, height, lab[0]),
            a: Plane::new(width, height, lab[1]),
            b: Plane::new(width, height, lab[2]),
            hue: Plane::new(width, height, hue),
        }
    }
}

/// Binary ground-truth mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MaskFrame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<bool>,
}

impl MaskFrame {
    pub fn positives(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }
}

// sRGB (D65) to XYZ.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];
const WHITE_D65: [f64; 3] = [0.950_47, 1.0, 1.088_83];
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_KAPPA: f64 = 24389.0 / 27.0;

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        (LAB_KAPPA * t + 16.0) / 116.0
    }
}

/// Converts one sRGB pixel to `(L, a, b)`.
pub fn rgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let mut xyz = [0.0; 3];
    for (row, out) in RGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    let a = (500.0 * (fx - fy)).clamp(-128.0, 127.0);
    let b = (200.0 * (fy - fz)).clamp(-128.0, 127.0);
    [l, a, b]
}

/// HSV hue in degrees, `[0, 360)`. Achromatic pixels get hue 0.
pub fn rgb_to_hue(rgb: [u8; 3]) -> f64 {
    let [r, g, b] = rgb.map(|c| c as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta == 0.0 {
        return 0.0;
    }
    let h = if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let h = h.rem_euclid(360.0);
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

pub fn to_lab(frame: &Frame) -> LabFrame {
    let (w, h) = (frame.width, frame.height);
    let n = w * h;
    let (mut l, mut a, mut b, mut hue) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for px in frame.rgb.chunks_exact(3) {
        let rgb = [px[0], px[1], px[2]];
        let lab = rgb_to_lab(rgb);
        l.push(lab[0]);
        a.push(lab[1]);
        b.push(lab[2]);
        hue.push(rgb_to_hue(rgb));
    }
    LabFrame {
        l: Plane::from_vec(w, h, l),
        a: Plane::from_vec(w, h, a),
        b: Plane::from_vec(w, h, b),
        hue: Plane::from_vec(w, h, hue),
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Lists files in `dir` whose name matches `pattern`, in natural order.
pub fn list_matching(dir: &Path, pattern: &str) -> Result<Vec<PathBuf>> {
    let pattern = glob::Pattern::new(pattern)
        .map_err(|e| Error::Config(format!("bad filename pattern {pattern:?}: {e}")))?;
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        if pattern.matches(&name) && is_supported_image(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| {
        let an = a.file_name().unwrap_or_default().to_string_lossy();
        let bn = b.file_name().unwrap_or_default().to_string_lossy();
        natord::compare(&an, &bn)
    });
    Ok(files)
}

fn is_supported_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .as_deref(),
        Some("png" | "ppm" | "pgm" | "pnm")
    )
}

pub fn load_frame(path: &Path, index: usize) -> Result<Frame> {
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    Ok(Frame::from_rgb(
        index,
        file_stem(path),
        w as usize,
        h as usize,
        img.into_raw(),
    ))
}

/// Loads every frame in `dir` matching `pattern`, sorted in natural order.
pub fn load_frame_sequence(dir: &Path, pattern: &str) -> Result<Vec<Frame>> {
    let files = list_matching(dir, pattern)?;
    if files.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(files.len());
    for (index, path) in files.iter().enumerate() {
        let frame = load_frame(path, index)?;
        if let Some(first) = frames.first() {
            if (first.width, first.height) != (frame.width, frame.height) {
                return Err(Error::DimensionMismatch(index));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn load_mask(path: &Path) -> Result<MaskFrame> {
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    Ok(MaskFrame {
        width: w as usize,
        height: h as usize,
        values: img.into_raw().into_iter().map(|v| v >= 128).collect(),
    })
}

/// Finds the ground-truth mask for each frame stem; unannotated frames are `None`.
pub fn load_ground_truth(gt_dir: &Path, stems: &[String]) -> Result<Vec<Option<MaskFrame>>> {
    if !gt_dir.is_dir() {
        return Ok(vec![None; stems.len()]);
    }
    let files = list_matching(gt_dir, DEFAULT_PATTERN)?;
    stems
        .iter()
        .map(|stem| {
            files
                .iter()
                .find(|p| file_stem(p) == *stem)
                .map(|p| load_mask(p))
                .transpose()
        })
        .collect()
}

/// Video subdirectories of a dataset root (those containing `frames/`), natural order.
pub fn list_videos(root: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut videos = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join(FRAMES_DIR).is_dir() {
            videos.push(path);
        }
    }
    videos.sort_by(|a, b| {
        natord::compare(
            &a.file_name().unwrap_or_default().to_string_lossy(),
            &b.file_name().unwrap_or_default().to_string_lossy(),
        )
    });
    Ok(videos)
}

/// Quantizes a saliency value to a byte, rounding half up.
#[inline]
pub fn saliency_to_byte(s: f64) -> u8 {
    (255.0 * s + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn saliency_to_image(map: &SaliencyMap) -> Result<GrayImage> {
    if let Some((index, &value)) = map
        .data()
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidSaliency { index, value });
    }
    let bytes = map.data().iter().map(|&s| saliency_to_byte(s)).collect();
    Ok(GrayImage::from_raw(map.width() as u32, map.height() as u32, bytes)
        .expect("buffer matches dimensions"))
}

/// Writes an 8-bit grayscale raster with `value = round(255 * s)`.
pub fn write_saliency(map: &SaliencyMap, path: &Path) -> Result<()> {
    let img = saliency_to_image(map)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::image(path, e))
}

pub fn read_saliency(path: &Path) -> Result<SaliencyMap> {
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .to_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|Luma([v])| *v as f64 / 255.0).collect();
    Ok(Plane::from_vec(w as usize, h as usize, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::RgbImage;

    fn save_rgb(path: &Path, w: u32, h: u32) {
        RgbImage::from_fn(w, h, |x, y| image::Rgb([x as u8, y as u8, 7]))
            .save(path)
            .unwrap();
    }

    #[test]
    fn loads_in_natural_order() {
        let dir = tempfile::tempdir().unwrap();
        save_rgb(&dir.path().join("f10.png"), 8, 8);
        save_rgb(&dir.path().join("f2.png"), 8, 8);
        let frames = load_frame_sequence(dir.path(), "*.png").unwrap();
        let names: Vec<_> = frames.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names, ["f2", "f10"]);
        assert_eq!(frames[0].index, 0);
        assert_eq!(frames[1].index, 1);
    }

    #[test]
    fn two_frames_same_size() {
        let dir = tempfile::tempdir().unwrap();
        save_rgb(&dir.path().join("f0.png"), 8, 8);
        save_rgb(&dir.path().join("f1.png"), 8, 8);
        let frames = load_frame_sequence(dir.path(), "f*.png").unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].pixel(3, 5), [3, 5, 7]);
    }

    #[test]
    fn dimension_mismatch_reports_index() {
        let dir = tempfile::tempdir().unwrap();
        save_rgb(&dir.path().join("f0.png"), 8, 8);
        save_rgb(&dir.path().join("f1.png"), 9, 8);
        let err = load_frame_sequence(dir.path(), "*.png").unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(1)), "{err:?}");
    }

    #[test]
    fn empty_match_is_no_frames() {
        let dir = tempfile::tempdir().unwrap();
        save_rgb(&dir.path().join("f0.png"), 8, 8);
        let err = load_frame_sequence(dir.path(), "*.ppm").unwrap_err();
        assert!(matches!(err, Error::NoFrames(_)));
    }

    #[test]
    fn loads_ppm_frames() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        fs::write(&path, b"P6\n2 1\n255\n\xff\x00\x00\x00\xff\x00").unwrap();
        let frames = load_frame_sequence(dir.path(), "*").unwrap();
        assert_eq!(frames[0].pixel(0, 0), [255, 0, 0]);
        assert_eq!(frames[0].pixel(1, 0), [0, 255, 0]);
    }

    #[test]
    fn lab_reference_colors() {
        assert_eq!(rgb_to_lab([0, 0, 0]), [0.0, 0.0, 0.0]);
        let white = rgb_to_lab([255, 255, 255]);
        assert!((white[0] - 100.0).abs() < 1e-3);
        assert!(white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        // Golden values from an independent sRGB -> CIELAB implementation.
        let golden: [([u8; 3], [f64; 3]); 4] = [
            ([255, 0, 0], [53.240_588, 80.092_308, 67.202_751]),
            ([0, 255, 0], [87.735_099, -86.183_030, 83.179_703]),
            ([0, 0, 255], [32.295_673, 79.185_591, -107.857_300]),
            ([128, 64, 200], [41.884_782, 53.521_302, -60.355_010]),
        ];
        for (rgb, expected) in golden {
            let got = rgb_to_lab(rgb);
            for c in 0..3 {
                assert!((got[c] - expected[c]).abs() < 0.02, "{rgb:?}: {got:?}");
            }
        }
    }

    #[test]
    fn hue_conventions() {
        assert_eq!(rgb_to_hue([255, 0, 0]), 0.0);
        assert_eq!(rgb_to_hue([0, 255, 0]), 120.0);
        assert_eq!(rgb_to_hue([0, 0, 255]), 240.0);
        assert_eq!(rgb_to_hue([90, 90, 90]), 0.0);
        assert!((rgb_to_hue([255, 0, 1]) - 359.76).abs() < 0.01);
    }

    #[test]
    fn to_lab_is_bit_identical_across_calls() {
        let frame = Frame::from_rgb(0, "x", 4, 2, (0..24).map(|v| (v * 11) as u8).collect());
        assert_eq!(to_lab(&frame), to_lab(&frame));
    }

    #[test]
    fn saliency_bytes_round_half_up() {
        assert_eq!(saliency_to_byte(0.0), 0);
        assert_eq!(saliency_to_byte(1.0), 255);
        assert_eq!(saliency_to_byte(0.5), 128);
    }

    #[test]
    fn write_rejects_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        let map = Plane::from_vec(2, 1, vec![0.2, 1.5]);
        let err = write_saliency(&map, &dir.path().join("m.png")).unwrap_err();
        assert!(matches!(err, Error::InvalidSaliency { index: 1, .. }));
        let nan = Plane::from_vec(1, 1, vec![f64::NAN]);
        assert!(write_saliency(&nan, &dir.path().join("n.png")).is_err());
    }

    #[test]
    fn constant_maps_write_black_and_white() {
        let dir = tempfile::tempdir().unwrap();
        for (value, byte) in [(0.0, 0u8), (1.0, 255u8)] {
            let path = dir.path().join(format!("{byte}.png"));
            write_saliency(&Plane::new(3, 3, value), &path).unwrap();
            let img = image::open(&path).unwrap().to_luma8();
            assert!(img.pixels().all(|p| p.0[0] == byte));
        }
    }

    #[test]
    fn ground_truth_matches_stems_and_allows_gaps() {
        let dir = tempfile::tempdir().unwrap();
        GrayImage::from_fn(2, 2, |x, _| Luma([if x == 0 { 200 } else { 127 }]))
            .save(dir.path().join("0008.png"))
            .unwrap();
        let stems = vec!["0000".to_string(), "0008".to_string()];
        let gt = load_ground_truth(dir.path(), &stems).unwrap();
        assert!(gt[0].is_none());
        let mask = gt[1].as_ref().unwrap();
        assert_eq!(mask.values, vec![true, false, true, false]);
    }
}
