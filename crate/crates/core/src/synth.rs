//! Deterministic synthetic videos with exact ground-truth masks.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{GrayImage, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame_io::{MaskFrame, FRAMES_DIR, GT_DIR};

const BACKGROUND: [f64; 3] = [70.0, 110.0, 80.0];
const BACKGROUND_JITTER: f64 = 15.0;
const OBJECT: [f64; 3] = [210.0, 60.0, 40.0];
const SECOND_OBJECT: [f64; 3] = [50.0, 70.0, 200.0];
const OBJECT_JITTER: f64 = 25.0;
const SPEED: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// A textured square translating 2 px per frame.
    MovingSquare,
    /// A textured disk that never moves.
    StaticBlob,
    /// Two squares moving in opposite directions on separate rows.
    TwoObjects,
}

impl SynthKind {
    pub fn name(self) -> &'static str {
        match self {
            SynthKind::MovingSquare => "moving_square",
            SynthKind::StaticBlob => "static_blob",
            SynthKind::TwoObjects => "two_objects",
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moving_square" => Ok(SynthKind::MovingSquare),
            "static_blob" => Ok(SynthKind::StaticBlob),
            "two_objects" => Ok(SynthKind::TwoObjects),
            other => Err(Error::Config(format!("unknown synthetic video kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(kind: SynthKind, frames: usize, width: usize, height: usize, seed: u64) -> Self {
        SynthSpec {
            kind,
            frames,
            width,
            height,
            seed,
        }
    }
}

pub struct SynthVideo {
    pub frames: Vec<RgbImage>,
    pub gt: Vec<MaskFrame>,
}

/// Per-pixel color texture: `base ± jitter`, drawn once.
struct Texture {
    width: usize,
    height: usize,
    rgb: Vec<[u8; 3]>,
}

impl Texture {
    fn new(rng: &mut ChaCha8Rng, width: usize, height: usize, base: [f64; 3], jitter: f64) -> Self {
        let rgb = (0..width * height)
            .map(|_| {
                let shade = rng.gen_range(-jitter..=jitter);
                let mut px = [0u8; 3];
                for (c, out) in px.iter_mut().enumerate() {
                    let tint = rng.gen_range(-jitter / 3.0..=jitter / 3.0);
                    *out = (base[c] + shade + tint).round().clamp(0.0, 255.0) as u8;
                }
                px
            })
            .collect();
        Texture { width, height, rgb }
    }

    fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.rgb[(y % self.height) * self.width + x % self.width]
    }
}

/// Position along a track of length `span` bouncing at both ends.
fn bounce(start: usize, step: usize, span: usize) -> usize {
    if span == 0 {
        return 0;
    }
    let period = 2 * span;
    let p = (start + step) % period;
    if p <= span {
        p
    } else {
        period - p
    }
}

struct Sprite<'a> {
    x: usize,
    y: usize,
    side: usize,
    disk: bool,
    texture: &'a Texture,
}

impl Sprite<'_> {
    fn covers(&self, x: usize, y: usize) -> bool {
        if x < self.x || y < self.y || x >= self.x + self.side || y >= self.y + self.side {
            return false;
        }
        if !self.disk {
            return true;
        }
        let r = self.side as f64 / 2.0;
        let dx = (x - self.x) as f64 + 0.5 - r;
        let dy = (y - self.y) as f64 + 0.5 - r;
        dx * dx + dy * dy <= r * r
    }
}

pub fn generate(spec: &SynthSpec) -> Result<SynthVideo> {
    let (w, h) = (spec.width, spec.height);
    if w < 16 || h < 16 || spec.frames == 0 {
        return Err(Error::Config("synthetic videos need at least 16x16 pixels and one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let background = Texture::new(&mut rng, w, h, BACKGROUND, BACKGROUND_JITTER);
    let side = ((0.2 * w.min(h) as f64).round() as usize).max(4);
    let first = Texture::new(&mut rng, side, side, OBJECT, OBJECT_JITTER);
    let second = Texture::new(&mut rng, side, side, SECOND_OBJECT, OBJECT_JITTER);

    let mut video = SynthVideo {
        frames: Vec::with_capacity(spec.frames),
        gt: Vec::with_capacity(spec.frames),
    };
    for t in 0..spec.frames {
        let step = SPEED * t;
        let sprites: Vec<Sprite> = match spec.kind {
            SynthKind::MovingSquare => vec![Sprite {
                x: bounce(w / 10, step, w - side),
                y: (h - side) / 2,
                side,
                disk: false,
                texture: &first,
            }],
            SynthKind::StaticBlob => {
                let d = ((1.5 * side as f64).round() as usize).min(w.min(h) - 2);
                vec![Sprite {
                    x: (w - d) / 2,
                    y: (h - d) / 2,
                    side: d,
                    disk: true,
                    texture: &first,
                }]
            }
            SynthKind::TwoObjects => {
                let span = w - side;
                vec![
                    Sprite {
                        x: bounce(span / 8, step, span),
                        y: h / 4 - side / 2,
                        side,
                        disk: false,
                        texture: &first,
                    },
                    Sprite {
                        x: bounce(span + span * 7 / 8, step, span),
                        y: 3 * h / 4 - side / 2,
                        side,
                        disk: false,
                        texture: &second,
                    },
                ]
            }
        };
        let mut frame = RgbImage::new(w as u32, h as u32);
        let mut mask = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let mut px = background.get(x, y);
                if let Some(s) = sprites.iter().find(|s| s.covers(x, y)) {
                    px = s.texture.get(x - s.x, y - s.y);
                    mask[y * w + x] = true;
                }
                frame.put_pixel(x as u32, y as u32, image::Rgb(px));
            }
        }
        video.frames.push(frame);
        video.gt.push(MaskFrame {
            width: w,
            height: h,
            values: mask,
        });
    }
    Ok(video)
}

/// Writes `<out>/<kind>/frames/NNNN.png` and `<out>/<kind>/gt/NNNN.png`;
/// returns the video directory.
pub fn write_synthetic(spec: &SynthSpec, out: &Path) -> Result<PathBuf> {
    let video = generate(spec)?;
    let root = out.join(spec.kind.name());
    let frames_dir = root.join(FRAMES_DIR);
    let gt_dir = root.join(GT_DIR);
    for dir in [&frames_dir, &gt_dir] {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    for (t, (frame, gt)) in video.frames.iter().zip(&video.gt).enumerate() {
        let name = format!("{t:04}.png");
        let path = frames_dir.join(&name);
        frame.save(&path).map_err(|e| Error::image(&path, e))?;
        let bytes = gt.values.iter().map(|&v| if v { 255 } else { 0 }).collect();
        let mask = GrayImage::from_raw(gt.width as u32, gt.height as u32, bytes).expect("mask dimensions");
        let path = gt_dir.join(&name);
        mask.save(&path).map_err(|e| Error::image(&path, e))?;
    }
    Ok(root)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn components(mask: &MaskFrame) -> usize {
        let (w, h) = (mask.width, mask.height);
        let mut seen = vec![false; w * h];
        let mut count = 0;
        for start in 0..w * h {
            if !mask.values[start] || seen[start] {
                continue;
            }
            count += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (x, y) = (i % w, i / w);
                let mut push = |j: usize| {
                    if mask.values[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                };
                if x > 0 {
                    push(i - 1);
                }
                if x + 1 < w {
                    push(i + 1);
                }
                if y > 0 {
                    push(i - w);
                }
                if y + 1 < h {
                    push(i + w);
                }
            }
        }
        count
    }

    #[test]
    fn same_seed_same_video() {
        let spec = SynthSpec::new(SynthKind::MovingSquare, 3, 40, 30, 7);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.gt, b.gt);
        let other = generate(&SynthSpec { seed: 8, ..spec }).unwrap();
        assert_ne!(a.frames, other.frames);
    }

    #[test]
    fn square_moves_two_pixels_per_frame() {
        let video = generate(&SynthSpec::new(SynthKind::MovingSquare, 2, 160, 120, 1)).unwrap();
        let first_x = |m: &MaskFrame| m.values.iter().position(|&v| v).unwrap() % m.width;
        assert_eq!(first_x(&video.gt[1]), first_x(&video.gt[0]) + 2);
        assert_eq!(video.gt[0].positives(), 24 * 24);
        // texture travels with the square
        let x0 = first_x(&video.gt[0]) as u32;
        let y0 = (video.gt[0].values.iter().position(|&v| v).unwrap() / 160) as u32;
        assert_eq!(video.frames[0].get_pixel(x0 + 3, y0 + 5), video.frames[1].get_pixel(x0 + 5, y0 + 5));
    }

    #[test]
    fn kinds_have_expected_components() {
        let single = generate(&SynthSpec::new(SynthKind::MovingSquare, 1, 32, 32, 0)).unwrap();
        assert_eq!(single.frames.len(), 1);
        let two = generate(&SynthSpec::new(SynthKind::TwoObjects, 40, 80, 60, 0)).unwrap();
        assert!(two.gt.iter().all(|m| components(m) == 2));
        let blob = generate(&SynthSpec::new(SynthKind::StaticBlob, 3, 60, 50, 0)).unwrap();
        assert!(blob.gt.iter().all(|m| components(m) == 1 && *m == blob.gt[0]));
        assert_eq!(blob.frames[0], blob.frames[2]);
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in [SynthKind::MovingSquare, SynthKind::StaticBlob, SynthKind::TwoObjects] {
            assert_eq!(kind.name().parse::<SynthKind>().unwrap(), kind);
        }
        assert!("cube".parse::<SynthKind>().is_err());
    }
}
