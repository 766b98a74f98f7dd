//! Multiscale wrapper: a spatial pyramid of the noisy video is denoised level
//! by level and the low frequencies of each fine result are replaced by
//! those of the coarser multiscale result.
//!
//! Two pyramids are available. The DCT pyramid crops or zero-pads the
//! orthonormal spectrum of each frame. The Lanczos pyramid resamples with
//! the `a = 3` Lanczos kernel on a co-sited grid (coarse sample `j` sits on
//! fine sample `2 j`) with whole-sample symmetric extension. Both halve each
//! axis to `ceil(n / 2)` and map constants to the same constant.

use rayon::prelude::*;
use rustdct::DctPlanner;

use crate::error::{Error, Result};
use crate::pipeline::{self, ParamProfile, PipelineMode};
use crate::vidio::Video;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pyramid {
    Dct,
    Lanczos,
}

impl std::str::FromStr for Pyramid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dct" => Ok(Self::Dct),
            "lanczos" | "lanczos3" => Ok(Self::Lanczos),
            _ => Err(Error::Config(format!("unknown pyramid {s:?}, expected dct or lanczos"))),
        }
    }
}

/// Multiscale configuration. The downsampling ratio is always 2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PyramidKind {
    pub kind: Pyramid,
    /// Total number of levels, the input included.
    pub scales: usize,
    /// Recomposition cutoff. DCT: fraction of frequencies kept, in `[0, 1]`.
    /// Lanczos: standard deviation of the Gaussian low-pass in coarse pixels.
    pub frec: f64,
}

impl PyramidKind {
    pub fn new(kind: Pyramid, scales: usize, frec: f64) -> Result<Self> {
        let p = Self { kind, scales, frec };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales == 0 {
            return Err(Error::Config("scales must be >= 1".into()));
        }
        if !(self.frec >= 0.0) || !self.frec.is_finite() {
            return Err(Error::Config(format!("frec must be finite and >= 0, got {}", self.frec)));
        }
        if self.kind == Pyramid::Dct && self.frec > 1.0 {
            return Err(Error::Config(format!("DCT frec must lie in [0, 1], got {}", self.frec)));
        }
        Ok(())
    }
}

/// One grayscale frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "{} samples do not form a {width}x{height} plane",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let data = (0..width * height).map(|i| f(i % width, i / width)).collect();
        Self { width, height, data }
    }

    pub fn from_frame(v: &Video, t: usize) -> Self {
        Self {
            width: v.width(),
            height: v.height(),
            data: v.frame(t).to_vec(),
        }
    }

    fn transposed(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for y in 0..self.height {
            for x in 0..self.width {
                data[x * self.height + y] = self.data[y * self.width + x];
            }
        }
        Self {
            width: self.height,
            height: self.width,
            data,
        }
    }
}

/// Coarse length for a fine axis of length `n`.
#[inline]
pub fn half(n: usize) -> usize {
    n.div_ceil(2)
}

// =============================================================================
// DCT
// =============================================================================

fn dct_rows(p: &mut Plane, inverse: bool, planner: &mut DctPlanner<f64>) {
    let n = p.width;
    let dct = planner.plan_dct2(n);
    let c0 = (1.0 / n as f64).sqrt();
    let ck = (2.0 / n as f64).sqrt();
    for row in p.data.chunks_exact_mut(n) {
        if inverse {
            row[0] *= 2.0 * c0;
            row[1..].iter_mut().for_each(|c| *c *= ck);
            dct.process_dct3(row);
        } else {
            dct.process_dct2(row);
            row[0] *= c0;
            row[1..].iter_mut().for_each(|c| *c *= ck);
        }
    }
}

/// Orthonormal separable 2D DCT-II (or its inverse).
pub fn dct2d(p: &Plane, inverse: bool) -> Plane {
    let mut planner = DctPlanner::new();
    let mut out = p.clone();
    dct_rows(&mut out, inverse, &mut planner);
    let mut t = out.transposed();
    dct_rows(&mut t, inverse, &mut planner);
    t.transposed()
}

/// Copies the top-left `min` overlap of a spectrum into a `w x h` one.
fn resize_spectrum(s: &Plane, w: usize, h: usize) -> Plane {
    let mut out = Plane {
        width: w,
        height: h,
        data: vec![0.0; w * h],
    };
    let cw = w.min(s.width);
    for y in 0..h.min(s.height) {
        out.data[y * w..y * w + cw].copy_from_slice(&s.data[y * s.width..y * s.width + cw]);
    }
    out
}

fn dct_resize(p: &Plane, w: usize, h: usize) -> Plane {
    let spec = resize_spectrum(&dct2d(p, false), w, h);
    let mut out = dct2d(&spec, true);
    let gain = ((w * h) as f64 / (p.width * p.height) as f64).sqrt();
    out.data.iter_mut().for_each(|x| *x *= gain);
    out
}

// =============================================================================
// Lanczos
// =============================================================================

/// Lanczos kernel with `a = 3`.
pub fn lanczos3(x: f64) -> f64 {
    let sinc = |t: f64| {
        if t == 0.0 {
            1.0
        } else {
            let pt = std::f64::consts::PI * t;
            pt.sin() / pt
        }
    };
    if x.abs() < 3.0 {
        sinc(x) * sinc(x / 3.0)
    } else {
        0.0
    }
}

/// Whole-sample symmetric reflection of `i` into `[0, n)`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m >= n as isize { period - m } else { m }) as usize
}

/// Normalized decimation taps `k3(m / 2)` for offsets `m = -5..=5`.
fn down_taps() -> Vec<f64> {
    let raw: Vec<f64> = (-5..=5).map(|m| lanczos3(m as f64 / 2.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / s).collect()
}

/// Per-axis noise standard deviation gain after `levels` Lanczos
/// decimations: the l2 norm of the composite decimation filter.
pub fn lanczos_noise_gain(levels: usize) -> f64 {
    let taps = down_taps();
    // composite filter as (offset, weight) on the fine grid
    let mut h: Vec<(isize, f64)> = vec![(0, 1.0)];
    for s in 0..levels {
        let stride = 1isize << s;
        let mut next = std::collections::BTreeMap::new();
        for (m, w) in taps.iter().enumerate() {
            for &(n, hw) in &h {
                *next.entry(stride * (m as isize - 5) + n).or_insert(0.0) += w * hw;
            }
        }
        h = next.into_iter().collect();
    }
    h.iter().map(|(_, w)| w * w).sum::<f64>().sqrt()
}

/// Applies `f(row) -> new_row` to every row.
fn map_rows(p: &Plane, new_width: usize, f: impl Fn(&[f64], &mut [f64])) -> Plane {
    let mut data = vec![0.0; new_width * p.height];
    for (src, dst) in p.data.chunks_exact(p.width).zip(data.chunks_exact_mut(new_width)) {
        f(src, dst);
    }
    Plane {
        width: new_width,
        height: p.height,
        data,
    }
}

fn separable(p: &Plane, w: usize, h: usize, f: impl Fn(&[f64], &mut [f64]) + Copy) -> Plane {
    map_rows(&map_rows(p, w, f).transposed(), h, f).transposed()
}

fn lanczos_down_line(src: &[f64], dst: &mut [f64]) {
    let taps = down_taps();
    let n = src.len();
    for (j, out) in dst.iter_mut().enumerate() {
        *out = taps
            .iter()
            .enumerate()
            .map(|(m, w)| w * src[reflect(2 * j as isize + m as isize - 5, n)])
            .sum();
    }
}

fn lanczos_up_line(src: &[f64], dst: &mut [f64]) {
    let m = src.len();
    for (x, out) in dst.iter_mut().enumerate() {
        if x % 2 == 0 {
            *out = src[reflect((x / 2) as isize, m)];
            continue;
        }
        let pos = x as f64 / 2.0;
        let base = (x / 2) as isize;
        let (mut acc, mut norm) = (0.0, 0.0);
        for j in base - 2..=base + 3 {
            let w = lanczos3(pos - j as f64);
            acc += w * src[reflect(j, m)];
            norm += w;
        }
        *out = acc / norm;
    }
}

fn gaussian_line(sigma: f64) -> impl Fn(&[f64], &mut [f64]) + Copy {
    let r = (3.0 * sigma).ceil() as isize;
    move |src: &[f64], dst: &mut [f64]| {
        let n = src.len();
        let norm: f64 = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).sum();
        for (x, out) in dst.iter_mut().enumerate() {
            *out = (-r..=r)
                .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp() * src[reflect(x as isize + i, n)])
                .sum::<f64>()
                / norm;
        }
    }
}

// =============================================================================
// Frame operators
// =============================================================================

/// Halves both axes (to `ceil(n / 2)`).
pub fn downscale(p: &Plane, kind: Pyramid) -> Result<Plane> {
    if p.width < 2 && p.height < 2 {
        return Err(Error::InvalidInput(format!(
            "cannot downscale a {}x{} frame",
            p.width, p.height
        )));
    }
    let (w, h) = (half(p.width), half(p.height));
    Ok(match kind {
        Pyramid::Dct => dct_resize(p, w, h),
        Pyramid::Lanczos => separable(p, w, h, lanczos_down_line),
    })
}

/// Brings a coarse frame back to `width x height`, whose halves must be
/// the frame's dimensions.
pub fn upscale(p: &Plane, kind: Pyramid, width: usize, height: usize) -> Result<Plane> {
    if half(width) != p.width || half(height) != p.height {
        return Err(Error::InvalidInput(format!(
            "{}x{} is not the coarse size of {width}x{height}",
            p.width, p.height
        )));
    }
    Ok(match kind {
        Pyramid::Dct => dct_resize(p, width, height),
        Pyramid::Lanczos => separable(p, width, height, lanczos_up_line),
    })
}

/// Low-pass used by the recomposition. DCT: keeps the coefficients `(i, j)`
/// with `i < frec * W` and `j < frec * H`. Lanczos: Gaussian blur of
/// standard deviation `frec` (`0` leaves the frame unchanged).
pub fn lowpass(p: &Plane, kind: Pyramid, frec: f64) -> Result<Plane> {
    if !(frec >= 0.0) || !frec.is_finite() {
        return Err(Error::Config(format!("frec must be finite and >= 0, got {frec}")));
    }
    match kind {
        Pyramid::Dct => {
            if frec > 1.0 {
                return Err(Error::Config(format!("DCT frec must lie in [0, 1], got {frec}")));
            }
            if frec == 1.0 {
                return Ok(p.clone());
            }
            let mut s = dct2d(p, false);
            let (cw, ch) = (frec * p.width as f64, frec * p.height as f64);
            for y in 0..p.height {
                for x in 0..p.width {
                    if !((x as f64) < cw && (y as f64) < ch) {
                        s.data[y * p.width + x] = 0.0;
                    }
                }
            }
            Ok(dct2d(&s, true))
        }
        Pyramid::Lanczos => {
            if frec == 0.0 {
                return Ok(p.clone());
            }
            Ok(separable(p, p.width, p.height, gaussian_line(frec)))
        }
    }
}

fn per_frame(v: &Video, w: usize, h: usize, f: impl Fn(usize, Plane) -> Result<Plane> + Sync) -> Result<Video> {
    let frames: Vec<Vec<f64>> = (0..v.frames())
        .into_par_iter()
        .map(|t| f(t, Plane::from_frame(v, t)).map(|p| p.data))
        .collect::<Result<_>>()?;
    Video::from_frames(w, h, frames)
}

// =============================================================================
// Pyramids
// =============================================================================

/// Level 0 is the input; each further level halves both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoPyramid {
    pub kind: Pyramid,
    pub levels: Vec<Video>,
}

impl VideoPyramid {
    pub fn build(v: &Video, kind: Pyramid, scales: usize) -> Result<Self> {
        if scales == 0 {
            return Err(Error::Config("scales must be >= 1".into()));
        }
        let mut levels = vec![v.clone()];
        for _ in 1..scales {
            let last = levels.last().unwrap();
            let (w, h) = (half(last.width()), half(last.height()));
            levels.push(per_frame(last, w, h, |_, p| downscale(&p, kind))?);
        }
        Ok(Self { kind, levels })
    }
}

/// Noise standard deviation at every level for input noise `sigma`.
pub fn level_sigmas(sigma: f64, kind: Pyramid, width: usize, height: usize, scales: usize) -> Vec<f64> {
    let (mut w, mut h) = (width, height);
    let mut out = vec![sigma];
    for s in 1..scales {
        let (cw, ch) = (half(w), half(h));
        out.push(match kind {
            Pyramid::Dct => sigma * ((cw * ch) as f64 / (width * height) as f64).sqrt(),
            Pyramid::Lanczos => {
                let g = lanczos_noise_gain(s);
                sigma * (if width > 1 { g } else { 1.0 }) * (if height > 1 { g } else { 1.0 })
            }
        });
        (w, h) = (cw, ch);
    }
    out
}

/// Combines per-level single-scale results, finest first: each level keeps
/// its own content minus its low-passed coarse projection, plus the
/// low-passed coarser multiscale result, all brought back to its size.
pub fn recompose(single: &[Video], kind: Pyramid, frec: f64) -> Result<Video> {
    let Some(coarsest) = single.last() else {
        return Err(Error::InvalidInput("no levels to recompose".into()));
    };
    for pair in single.windows(2) {
        let (fine, coarse) = (&pair[0], &pair[1]);
        if coarse.width() != half(fine.width())
            || coarse.height() != half(fine.height())
            || coarse.frames() != fine.frames()
        {
            return Err(Error::InvalidInput(format!(
                "level {}x{}x{} does not follow {}x{}x{}",
                coarse.width(),
                coarse.height(),
                coarse.frames(),
                fine.width(),
                fine.height(),
                fine.frames()
            )));
        }
    }
    let mut ms = coarsest.clone();
    for fine in single.iter().rev().skip(1) {
        let (w, h) = (fine.width(), fine.height());
        ms = per_frame(fine, w, h, |t, u| {
            let own = upscale(&lowpass(&downscale(&u, kind)?, kind, frec)?, kind, w, h)?;
            let coarse = upscale(&lowpass(&Plane::from_frame(&ms, t), kind, frec)?, kind, w, h)?;
            let data = u
                .data
                .iter()
                .zip(&own.data)
                .zip(&coarse.data)
                .map(|((a, b), c)| a - b + c)
                .collect();
            Plane::new(w, h, data)
        })?;
    }
    Ok(ms)
}

/// Multiscale denoising: pyramid, per-level two-step denoising with the
/// level's noise level and flows, then recomposition. With one scale this
/// is exactly [`pipeline::denoise`]'s final output.
pub fn ms_denoise(
    v: &Video,
    sigma: f64,
    p: &ParamProfile,
    mode: &PipelineMode,
    pyr: &PyramidKind,
) -> Result<Video> {
    Ok(ms_denoise_full(v, sigma, p, mode, pyr)?.1)
}

/// Like [`ms_denoise`], also recomposing the per-level basic estimates.
/// Returns `(basic, final)`.
pub fn ms_denoise_full(
    v: &Video,
    sigma: f64,
    p: &ParamProfile,
    mode: &PipelineMode,
    pyr: &PyramidKind,
) -> Result<(Video, Video)> {
    pyr.validate()?;
    if pyr.scales == 1 {
        return pipeline::denoise(v, sigma, p, mode);
    }
    let k = p.step1.patch.k.max(p.step2.patch.k);
    let (mut w, mut h, mut feasible) = (v.width(), v.height(), 0);
    while w >= k && h >= k && feasible < pyr.scales {
        feasible += 1;
        w = half(w);
        h = half(h);
    }
    if feasible < pyr.scales {
        return Err(Error::Config(format!(
            "{} scales requested but only {feasible} fit {}x{} frames with {k}x{k} patches",
            pyr.scales,
            v.width(),
            v.height()
        )));
    }
    mode.validate(v)?;
    let pyramid = VideoPyramid::build(v, pyr.kind, pyr.scales)?;
    let sigmas = level_sigmas(sigma, pyr.kind, v.width(), v.height(), pyr.scales);
    let mut basics = Vec::with_capacity(pyr.scales);
    let mut finals = Vec::with_capacity(pyr.scales);
    for (level, s) in pyramid.levels.iter().zip(sigmas) {
        let m = PipelineMode {
            flows: mode.flows.as_ref().map(|f| f.resampled(level.width(), level.height())),
            ..mode.clone()
        };
        let (b, f) = pipeline::denoise(level, s, p, &m)?;
        basics.push(b);
        finals.push(f);
    }
    Ok((recompose(&basics, pyr.kind, pyr.frec)?, recompose(&finals, pyr.kind, pyr.frec)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xform::dct_matrix;

    fn ramp(w: usize, h: usize) -> Plane {
        Plane::from_fn(w, h, |x, y| ((x * 37 + y * 91) % 113) as f64 + 0.25 * x as f64)
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn fast_dct_matches_matrix_dct() {
        for (w, h) in [(8, 8), (5, 13), (16, 7)] {
            let p = ramp(w, h);
            let fast = dct2d(&p, false);
            let (a, b) = (dct_matrix(w), dct_matrix(h));
            for v in 0..h {
                for u in 0..w {
                    let mut s = 0.0;
                    for y in 0..h {
                        for x in 0..w {
                            s += b[v * h + y] * a[u * w + x] * p.data[y * w + x];
                        }
                    }
                    assert!((s - fast.data[v * w + u]).abs() < 1e-9);
                }
            }
            assert!(max_diff(&dct2d(&fast, true).data, &p.data) < 1e-9);
        }
    }

    #[test]
    fn constants_survive_resampling() {
        for kind in [Pyramid::Dct, Pyramid::Lanczos] {
            for (w, h) in [(16, 12), (15, 9), (2, 7)] {
                let p = Plane::from_fn(w, h, |_, _| 42.5);
                let d = downscale(&p, kind).unwrap();
                assert_eq!((d.width, d.height), (half(w), half(h)));
                assert!(d.data.iter().all(|x| (x - 42.5).abs() < 1e-9), "{kind:?} {w}x{h}");
                let u = upscale(&d, kind, w, h).unwrap();
                assert!(u.data.iter().all(|x| (x - 42.5).abs() < 1e-9), "{kind:?} {w}x{h}");
            }
        }
    }

    #[test]
    fn dct_quadrant_semantics() {
        let (w, h) = (16, 8);
        let cosine = |u: usize| {
            let mut s = Plane::from_fn(w, h, |_, _| 0.0);
            s.data[u] = 10.0;
            dct2d(&s, true)
        };
        let low = dct2d(&downscale(&cosine(1), Pyramid::Dct).unwrap(), false);
        let gain = ((half(w) * half(h)) as f64 / (w * h) as f64).sqrt();
        for (i, c) in low.data.iter().enumerate() {
            let expect = if i == 1 { 10.0 * gain } else { 0.0 };
            assert!((c - expect).abs() < 1e-9);
        }
        let high = downscale(&cosine(w - 1), Pyramid::Dct).unwrap();
        assert!(high.data.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn lanczos_kernel_nodes() {
        assert!((lanczos3(0.0) - 1.0).abs() < 1e-12);
        for x in [1.0, 2.0, -1.0, -2.0, 3.0, 4.5] {
            assert!(lanczos3(x).abs() < 1e-12, "{x}");
        }
        assert!((lanczos3(0.5) - lanczos3(-0.5)).abs() < 1e-15);
    }

    #[test]
    fn dct_up_down_is_identity_on_band_limited_frames() {
        let (w, h) = (20, 14);
        let mut s = dct2d(&ramp(w, h), false);
        for y in 0..h {
            for x in 0..w {
                if x >= half(w) || y >= half(h) {
                    s.data[y * w + x] = 0.0;
                }
            }
        }
        let p = dct2d(&s, true);
        let back = upscale(&downscale(&p, Pyramid::Dct).unwrap(), Pyramid::Dct, w, h).unwrap();
        assert!(max_diff(&back.data, &p.data) < 1e-8);
    }

    #[test]
    fn lanczos_upscale_interpolates_at_nodes() {
        let c = ramp(9, 6);
        for (w, h) in [(18, 12), (17, 11)] {
            let up = upscale(&c, Pyramid::Lanczos, w, h).unwrap();
            for y in (0..h).step_by(2) {
                for x in (0..w).step_by(2) {
                    assert!((up.data[y * w + x] - c.data[(y / 2) * 9 + x / 2]).abs() < 1e-12);
                }
            }
        }
        assert!(upscale(&c, Pyramid::Lanczos, 20, 12).is_err());
    }

    #[test]
    fn lowpass_extremes() {
        let p = ramp(12, 10);
        assert!(max_diff(&lowpass(&p, Pyramid::Dct, 1.0).unwrap().data, &p.data) < 1e-12);
        assert!(lowpass(&p, Pyramid::Dct, 0.0).unwrap().data.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(lowpass(&p, Pyramid::Lanczos, 0.0).unwrap(), p);
        assert!(lowpass(&p, Pyramid::Dct, 1.5).is_err());
        let c = Plane::from_fn(12, 10, |_, _| 9.0);
        for (kind, f) in [(Pyramid::Dct, 0.05), (Pyramid::Dct, 0.5), (Pyramid::Lanczos, 0.7), (Pyramid::Lanczos, 4.0)] {
            assert!(lowpass(&c, kind, f).unwrap().data.iter().all(|x| (x - 9.0).abs() < 1e-9));
        }
    }

    #[test]
    fn recompose_base_cases() {
        let v = Video::from_fn(10, 8, 2, |x, y, t| (x * y + t) as f64).unwrap();
        for kind in [Pyramid::Dct, Pyramid::Lanczos] {
            assert_eq!(recompose(std::slice::from_ref(&v), kind, 0.5).unwrap(), v);
        }
        let coarse = Video::from_fn(5, 4, 2, |x, _, _| x as f64 * 3.0).unwrap();
        let out = recompose(&[v.clone(), coarse.clone()], Pyramid::Dct, 0.0).unwrap();
        assert_eq!(out, v);
        let c0 = Video::filled(10, 8, 2, 5.0).unwrap();
        let c1 = Video::filled(5, 4, 2, 5.0).unwrap();
        for (kind, f) in [(Pyramid::Dct, 0.5), (Pyramid::Lanczos, 1.0)] {
            let out = recompose(&[c0.clone(), c1.clone()], kind, f).unwrap();
            assert!(out.data().iter().all(|x| (x - 5.0).abs() < 1e-9));
        }
        assert!(recompose(&[v, Video::filled(4, 4, 2, 0.0).unwrap()], Pyramid::Dct, 0.5).is_err());
    }

    #[test]
    fn recompose_is_linear() {
        let a0 = Video::from_fn(12, 10, 2, |x, y, t| ((x * 7 + y * 3 + t) % 17) as f64).unwrap();
        let a1 = Video::from_fn(6, 5, 2, |x, y, _| (x + 2 * y) as f64).unwrap();
        let b0 = Video::from_fn(12, 10, 2, |x, y, _| (x as f64).sin() * y as f64).unwrap();
        let b1 = Video::from_fn(6, 5, 2, |x, y, t| (x * y * t) as f64).unwrap();
        let sum = |p: &Video, q: &Video| {
            Video::from_data(p.width(), p.height(), p.frames(), p.data().iter().zip(q.data()).map(|(x, y)| 2.0 * x + y).collect()).unwrap()
        };
        for (kind, f) in [(Pyramid::Dct, 0.6), (Pyramid::Lanczos, 1.0)] {
            let ra = recompose(&[a0.clone(), a1.clone()], kind, f).unwrap();
            let rb = recompose(&[b0.clone(), b1.clone()], kind, f).unwrap();
            let rs = recompose(&[sum(&a0, &b0), sum(&a1, &b1)], kind, f).unwrap();
            assert!(max_diff(rs.data(), sum(&ra, &rb).data()) < 1e-9);
        }
    }

    #[test]
    fn infeasible_scales_are_config_errors() {
        let v = Video::filled(32, 32, 2, 1.0).unwrap();
        let pyr = PyramidKind::new(Pyramid::Lanczos, 4, 1.0).unwrap();
        let err = ms_denoise(&v, 10.0, &ParamProfile::np(), &PipelineMode::plain(), &pyr).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("only 3")), "{err}");
        assert!(PyramidKind::new(Pyramid::Dct, 2, 1.2).is_err());
        assert!(PyramidKind::new(Pyramid::Lanczos, 0, 1.0).is_err());
    }

    #[test]
    fn single_scale_is_the_plain_denoiser() {
        let v = Video::from_fn(24, 24, 3, |x, y, t| ((x * 13 + y * 7 + t * 5) % 64) as f64).unwrap();
        let p = ParamProfile::np();
        let pyr = PyramidKind::new(Pyramid::Lanczos, 1, 1.0).unwrap();
        let ms = ms_denoise(&v, 15.0, &p, &PipelineMode::plain(), &pyr).unwrap();
        assert_eq!(ms, pipeline::denoise(&v, 15.0, &p, &PipelineMode::plain()).unwrap().1);
    }
}
