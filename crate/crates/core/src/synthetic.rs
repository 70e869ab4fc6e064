//! Procedural RGB scenes for desk-scale training when no photo corpus is at
//! hand: a two-colour linear gradient, a handful of flat ellipses and three
//! octaves of bilinear value noise.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::pngio::save_rgb_png;
use crate::{Result, RgbImage};

const NOISE_OCTAVES: [usize; 3] = [4, 8, 16];
const NOISE_AMPLITUDE: f32 = 0.05;

/// Bilinear resize of an `s x s x 3` grid to `size x size`, sampling at pixel
/// centres with edge clamping.
fn upsample_noise(grid: &[f32], s: usize, size: usize) -> Vec<f32> {
    let scale = s as f32 / size as f32;
    let coord = |i: usize| {
        let f = ((i as f32 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (f.floor() as usize).min(s - 1);
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, f - i0 as f32)
    };
    let mut out = vec![0f32; size * size * 3];
    for y in 0..size {
        let (y0, y1, fy) = coord(y);
        for x in 0..size {
            let (x0, x1, fx) = coord(x);
            for c in 0..3 {
                let g = |yy: usize, xx: usize| grid[(yy * s + xx) * 3 + c];
                let top = g(y0, x0) * (1.0 - fx) + g(y0, x1) * fx;
                let bot = g(y1, x0) * (1.0 - fx) + g(y1, x1) * fx;
                out[(y * size + x) * 3 + c] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    out
}

/// One `size x size` scene drawn from `rng`.
pub fn procedural_scene<R: Rng + ?Sized>(rng: &mut R, size: usize) -> RgbImage {
    let c0: [f32; 3] = rng.random();
    let c1: [f32; 3] = rng.random();
    let angle = rng.random_range(0.0..std::f32::consts::TAU);
    let (ca, sa) = (angle.cos(), angle.sin());
    let n = size as f32;

    let proj: Vec<f32> = (0..size * size)
        .map(|i| ca * (i % size) as f32 / n + sa * (i / size) as f32 / n)
        .collect();
    let (lo, hi) = proj
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut img: Vec<f32> = proj
        .iter()
        .flat_map(|&p| {
            let t = (p - lo) / (hi - lo + 1e-9);
            [0, 1, 2].map(|c| c0[c] * (1.0 - t) + c1[c] * t)
        })
        .collect();

    for _ in 0..rng.random_range(3..9) {
        let col: [f32; 3] = rng.random();
        let (cx, cy): (f32, f32) = (rng.random(), rng.random());
        let rx = rng.random_range(0.05..0.3f32);
        let ry = rng.random_range(0.05..0.3f32);
        for y in 0..size {
            for x in 0..size {
                let dx = (x as f32 / n - cx) / rx;
                let dy = (y as f32 / n - cy) / ry;
                if dx * dx + dy * dy < 1.0 {
                    img[(y * size + x) * 3..][..3].copy_from_slice(&col);
                }
            }
        }
    }

    for s in NOISE_OCTAVES {
        let grid: Vec<f32> = (0..s * s * 3).map(|_| rng.random_range(-1.0..1.0)).collect();
        for (v, d) in img.iter_mut().zip(upsample_noise(&grid, s, size)) {
            *v += NOISE_AMPLITUDE * d;
        }
    }
    RgbImage::from_unclamped(img, size, size).expect("square buffer of the right length")
}

/// Write `n` scenes as `scene_XXXX.png` into `dir`; deterministic per seed.
pub fn write_corpus(dir: &Path, n: usize, size: usize, seed: u64) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| crate::Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let path = dir.join(format!("scene_{i:04}.png"));
            save_rgb_png(&procedural_scene(&mut rng, size), &path, None)?;
            Ok(path)
        })
        .collect()
}
