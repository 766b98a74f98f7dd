//! Video container, frame-sequence I/O, AWGN synthesis and PSNR.
//!
//! Samples are `f64` in the nominal range [0, 255] and are never clamped
//! internally; quantization only happens when exporting to 8-bit files.
//!
//! Frame sequences are addressed with a printf-style template holding one
//! integer conversion (`%d`, `%03d`, `%i`, ...). The file extension selects
//! the container:
//!
//! * `.png`, `.pgm`: 8-bit (16-bit on input) grayscale,
//! * `.f32`: lossless float frames, a 12-byte header (`VF32`, then width and
//!   height as little-endian `u32`) followed by the row-major raster as
//!   little-endian `f32`.
//!
//! Noise is drawn from a ChaCha8 stream seeded with the 64-bit seed, using
//! the ziggurat sampler of `rand_distr::StandardNormal`, one draw per sample
//! in storage order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const FLOAT_MAGIC: &[u8; 4] = b"VF32";

/// Planar grayscale frame stack, row-major within each frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    width: usize,
    height: usize,
    frames: usize,
    data: Vec<f64>,
}

impl Video {
    /// All-zero video.
    pub fn new(width: usize, height: usize, frames: usize) -> Result<Self> {
        Self::filled(width, height, frames, 0.0)
    }

    pub fn filled(width: usize, height: usize, frames: usize, value: f64) -> Result<Self> {
        check_dims(width, height, frames)?;
        Ok(Self {
            width,
            height,
            frames,
            data: vec![value; width * height * frames],
        })
    }

    pub fn from_data(width: usize, height: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, frames)?;
        if data.len() != width * height * frames {
            return Err(Error::InvalidInput(format!(
                "expected {} samples for {width}x{height}x{frames}, got {}",
                width * height * frames,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            frames,
            data,
        })
    }

    /// Builds a video by evaluating `f(x, y, t)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        frames: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height, frames)?;
        let mut data = Vec::with_capacity(width * height * frames);
        for t in 0..frames {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(x, y, t));
                }
            }
        }
        Ok(Self {
            width,
            height,
            frames,
            data,
        })
    }

    /// Stacks equally sized frames (each `width * height` samples).
    pub fn from_frames(width: usize, height: usize, frames: Vec<Vec<f64>>) -> Result<Self> {
        let count = frames.len();
        check_dims(width, height, count)?;
        let mut data = Vec::with_capacity(width * height * count);
        for (t, frame) in frames.into_iter().enumerate() {
            if frame.len() != width * height {
                return Err(Error::Format(format!(
                    "frame {t} has {} samples, expected {}",
                    frame.len(),
                    width * height
                )));
            }
            data.extend(frame);
        }
        Ok(Self {
            width,
            height,
            frames: count,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn frames(&self) -> usize {
        self.frames
    }

    #[inline]
    pub fn frame_len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, t: usize) -> usize {
        (t * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, t: usize) -> f64 {
        self.data[self.index(x, y, t)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, t: usize, value: f64) {
        let i = self.index(x, y, t);
        self.data[i] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        let n = self.frame_len();
        &self.data[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        let n = self.frame_len();
        &mut self.data[t * n..(t + 1) * n]
    }

    pub fn same_shape(&self, other: &Video) -> bool {
        self.width == other.width && self.height == other.height && self.frames == other.frames
    }

    /// Applies `f` to every sample.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Video {
        Video {
            width: self.width,
            height: self.height,
            frames: self.frames,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn check_dims(width: usize, height: usize, frames: usize) -> Result<()> {
    if width == 0 || height == 0 || frames == 0 {
        return Err(Error::InvalidInput(format!(
            "video dimensions must be positive, got {width}x{height}x{frames}"
        )));
    }
    Ok(())
}

/// Additive white Gaussian noise parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidInput(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self { sigma, seed })
    }
}

/// Returns `u + n` with `n` i.i.d. N(0, sigma^2). The result is not clamped.
pub fn add_awgn(u: &Video, spec: NoiseSpec) -> Video {
    if spec.sigma == 0.0 {
        return u.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = u.clone();
    for v in out.data.iter_mut() {
        let n: f64 = rng.sample(StandardNormal);
        *v += spec.sigma * n;
    }
    out
}

pub fn mse(a: &Video, b: &Video) -> Result<f64> {
    if !a.same_shape(b) {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.frames, b.width, b.height, b.frames
        )));
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// PSNR in dB over all samples of all frames. Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Video, b: &Video, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

// =============================================================================
// Sequence paths
// =============================================================================

/// A printf-style path template with exactly one integer conversion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePattern {
    prefix: String,
    suffix: String,
    zero_pad: bool,
    width: usize,
}

impl FramePattern {
    pub fn parse(pattern: &str) -> Result<Self> {
        let bytes = pattern.as_bytes();
        let mut literal = String::new();
        let mut found: Option<(String, bool, usize)> = None;
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] != b'%' {
                let ch = pattern[i..].chars().next().unwrap();
                literal.push(ch);
                i += ch.len_utf8();
                continue;
            }
            if bytes.get(i + 1) == Some(&b'%') {
                literal.push('%');
                i += 2;
                continue;
            }
            let mut j = i + 1;
            let zero_pad = bytes.get(j) == Some(&b'0');
            if zero_pad {
                j += 1;
            }
            let start = j;
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            let width = if j > start {
                pattern[start..j].parse().unwrap_or(0)
            } else {
                0
            };
            match bytes.get(j) {
                Some(b'd') | Some(b'i') | Some(b'u') => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "unsupported conversion in pattern {pattern:?}"
                    )))
                }
            }
            if found.is_some() {
                return Err(Error::InvalidInput(format!(
                    "pattern {pattern:?} has more than one integer conversion"
                )));
            }
            found = Some((std::mem::take(&mut literal), zero_pad, width));
            i = j + 1;
        }
        let (prefix, zero_pad, width) = found.ok_or_else(|| {
            Error::InvalidInput(format!("pattern {pattern:?} has no integer conversion"))
        })?;
        Ok(Self {
            prefix,
            suffix: literal,
            zero_pad,
            width,
        })
    }

    pub fn path(&self, index: usize) -> PathBuf {
        let number = if self.zero_pad {
            format!("{index:0w$}", w = self.width)
        } else {
            format!("{index:w$}", w = self.width)
        };
        PathBuf::from(format!("{}{}{}", self.prefix, number, self.suffix))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Container {
    Image,
    Float,
}

fn container_for(path: &Path) -> Container {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("f32") => Container::Float,
        _ => Container::Image,
    }
}

/// Loads frames `first..=last` of a sequence.
pub fn load_sequence(pattern: &str, first: usize, last: usize) -> Result<Video> {
    let pattern = FramePattern::parse(pattern)?;
    if last < first {
        return Err(Error::InvalidInput(format!(
            "last index {last} precedes first index {first}"
        )));
    }
    let mut frames = Vec::with_capacity(last - first + 1);
    let mut dims: Option<(usize, usize)> = None;
    for index in first..=last {
        let path = pattern.path(index);
        let (w, h, samples) = load_frame(&path, index)?;
        match dims {
            None => dims = Some((w, h)),
            Some((w0, h0)) if (w0, h0) != (w, h) => {
                return Err(Error::Format(format!(
                    "frame {index} ({}) is {w}x{h}, expected {w0}x{h0}",
                    path.display()
                )))
            }
            Some(_) => {}
        }
        frames.push(samples);
    }
    let (w, h) = dims.expect("at least one frame");
    Video::from_frames(w, h, frames)
}

/// Reads one frame as `(width, height, samples)`.
pub fn load_frame(path: &Path, index: usize) -> Result<(usize, usize, Vec<f64>)> {
    let bytes = fs::read(path).map_err(|source| Error::FrameIo {
        index,
        path: path.to_path_buf(),
        source,
    })?;
    match container_for(path) {
        Container::Float => decode_float_frame(&bytes, path),
        Container::Image => decode_image_frame(&bytes, path),
    }
}

fn decode_image_frame(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let format = image::ImageFormat::from_path(path)
        .or_else(|_| image::guess_format(bytes))
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let samples: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        DynamicImage::ImageLuma16(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        other => {
            let sixteen = matches!(
                other.color(),
                image::ColorType::Rgb16 | image::ColorType::Rgba16 | image::ColorType::La16
            );
            if sixteen {
                other.to_luma16().into_raw().into_iter().map(f64::from).collect()
            } else {
                other.to_luma8().into_raw().into_iter().map(f64::from).collect()
            }
        }
    };
    Ok((w, h, samples))
}

fn decode_float_frame(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let bad = |what: &str| Error::Format(format!("{}: {what}", path.display()));
    if bytes.len() < 12 || &bytes[0..4] != FLOAT_MAGIC {
        return Err(bad("missing VF32 header"));
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if w == 0 || h == 0 {
        return Err(bad("zero frame dimension"));
    }
    let body = &bytes[12..];
    if body.len() != w * h * 4 {
        return Err(bad("raster size does not match header"));
    }
    let samples = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok((w, h, samples))
}

/// Writes every frame of `v` through `pattern`, frame `t` at index `first + t`.
///
/// PNG/PGM outputs are clamped to [0, 255] and rounded; `.f32` outputs keep
/// the samples (narrowed to `f32`).
pub fn save_sequence(v: &Video, pattern: &str, first: usize) -> Result<()> {
    let pattern = FramePattern::parse(pattern)?;
    for t in 0..v.frames() {
        let path = pattern.path(first + t);
        save_frame(v.frame(t), v.width(), v.height(), &path)?;
    }
    Ok(())
}

pub fn save_frame(samples: &[f64], width: usize, height: usize, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    match container_for(path) {
        Container::Float => {
            let file = fs::File::create(path).map_err(io_err)?;
            let mut out = BufWriter::new(file);
            out.write_all(FLOAT_MAGIC).map_err(io_err)?;
            out.write_all(&(width as u32).to_le_bytes()).map_err(io_err)?;
            out.write_all(&(height as u32).to_le_bytes()).map_err(io_err)?;
            for &s in samples {
                out.write_all(&(s as f32).to_le_bytes()).map_err(io_err)?;
            }
            out.flush().map_err(io_err)
        }
        Container::Image => {
            let raw: Vec<u8> = samples.iter().map(|&s| quantize_u8(s)).collect();
            let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
                ImageBuffer::from_raw(width as u32, height as u32, raw)
                    .ok_or_else(|| Error::InvalidInput("frame size mismatch".into()))?;
            buf.save(path).map_err(|e| match e {
                image::ImageError::IoError(source) => io_err(source),
                other => Error::Format(format!("{}: {other}", path.display())),
            })
        }
    }
}

/// Clamps to [0, 255] and rounds half away from zero.
pub fn quantize_u8(s: f64) -> u8 {
    if s.is_nan() {
        return 0;
    }
    s.clamp(0.0, 255.0).round() as u8
}
