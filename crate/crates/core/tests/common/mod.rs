#![allow(dead_code)]

use vbm3d::vidio::Video;

fn hash(x: i64, y: i64, seed: u64) -> f64 {
    let mut h = (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ seed.wrapping_mul(0x1656_67B1_9E37_79F9);
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(x: f64, y: f64, cell: f64, seed: u64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (x0, y0) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - x0, gy - y0);
    let s = |t: f64| t * t * (3.0 - 2.0 * t);
    let (sx, sy) = (s(fx), s(fy));
    let (i, j) = (x0 as i64, y0 as i64);
    let a = hash(i, j, seed);
    let b = hash(i + 1, j, seed);
    let c = hash(i, j + 1, seed);
    let d = hash(i + 1, j + 1, seed);
    (1.0 - sy) * ((1.0 - sx) * a + sx * b) + sy * ((1.0 - sx) * c + sx * d)
}

/// Procedural grayscale texture in [0, 255] defined on the whole integer plane:
/// multi-octave value noise plus a few sharp-edged blobs and stripes.
pub fn texture(x: i64, y: i64, seed: u64) -> f64 {
    let (xf, yf) = (x as f64, y as f64);
    let mut v = 0.0;
    let mut amp = 0.5;
    for (o, cell) in [32.0, 16.0, 8.0, 4.0].into_iter().enumerate() {
        v += amp * value_noise(xf, yf, cell, seed + o as u64);
        amp *= 0.5;
    }
    let v = v / 0.9375;
    let blob = if value_noise(xf, yf, 24.0, seed + 99) > 0.55 { 50.0 } else { 0.0 };
    let stripes = 20.0 * ((xf * 0.45 + yf * 0.2).sin() > 0.3) as u8 as f64;
    (30.0 + 160.0 * v + blob + stripes).clamp(0.0, 255.0)
}

/// Texture moving by `(vx, vy)` pixels per frame.
pub fn translating(w: usize, h: usize, frames: usize, vx: i64, vy: i64, seed: u64) -> Video {
    Video::from_fn(w, h, frames, |x, y, t| {
        texture(x as i64 - vx * t as i64, y as i64 - vy * t as i64, seed)
    })
    .unwrap()
}

pub fn static_clip(w: usize, h: usize, frames: usize, seed: u64) -> Video {
    translating(w, h, frames, 0, 0, seed)
}

/// The fixed regression clip: 64x64x8, slow diagonal motion.
pub fn regression_clip() -> Video {
    translating(64, 64, 8, 1, 1, 2024)
}
