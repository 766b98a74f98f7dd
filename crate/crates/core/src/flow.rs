//! Optical flow: Middlebury `.flo` I/O, resampling, trajectory integration,
//! a block-matching flow estimator, and the flow-guided patch search.
//!
//! A forward flow at frame `t` maps a point of frame `t` to frame `t + 1`:
//! `frame[t+1](p + o(p)) ~ frame[t](p)`. Backward flows map `t` to `t - 1`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::search::{self, MatchList, PatchCoord, PatchSpec, SearchParams};
use crate::vidio::{FramePattern, Video};

/// Magic number opening every `.flo` file.
pub const FLO_MAGIC: f32 = 202021.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowDirection {
    #[default]
    Forward,
    Backward,
}

/// Dense displacement field, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    pub width: usize,
    pub height: usize,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub direction: FlowDirection,
}

impl FlowField {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::constant(width, height, 0.0, 0.0)
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        Self {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
            direction: FlowDirection::Forward,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> (f32, f32)) -> Self {
        let mut out = Self::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                out.u[y * width + x] = u;
                out.v[y * width + x] = v;
            }
        }
        out
    }

    pub fn with_direction(mut self, direction: FlowDirection) -> Self {
        self.direction = direction;
        self
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i] as f64, self.v[i] as f64)
    }

    fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Format("flow field has a zero dimension".into()));
        }
        if self.u.iter().chain(&self.v).any(|c| !c.is_finite()) {
            return Err(Error::Format("flow field holds non-finite values".into()));
        }
        Ok(())
    }
}

/// Reads a Middlebury `.flo` file.
pub fn load_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_flo(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::Format("truncated .flo header".into()));
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    if f32::from_le_bytes(word(0)) != FLO_MAGIC {
        return Err(Error::Format("bad .flo magic".into()));
    }
    let w = i32::from_le_bytes(word(4));
    let h = i32::from_le_bytes(word(8));
    if w <= 0 || h <= 0 {
        return Err(Error::Format(format!("bad .flo dimensions {w}x{h}")));
    }
    let (w, h) = (w as usize, h as usize);
    let body = &bytes[12..];
    if body.len() != w * h * 8 {
        return Err(Error::Format(format!(
            "truncated .flo raster: {} bytes for {w}x{h}",
            body.len()
        )));
    }
    let mut field = FlowField::zeros(w, h);
    for (i, pair) in body.chunks_exact(8).enumerate() {
        field.u[i] = f32::from_le_bytes(pair[0..4].try_into().unwrap());
        field.v[i] = f32::from_le_bytes(pair[4..8].try_into().unwrap());
    }
    field.validate()?;
    Ok(field)
}

pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    out.write_all(&FLO_MAGIC.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(flow.width as i32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&(flow.height as i32).to_le_bytes()).map_err(io_err)?;
    for (u, v) in flow.u.iter().zip(&flow.v) {
        out.write_all(&u.to_le_bytes()).map_err(io_err)?;
        out.write_all(&v.to_le_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

// =============================================================================
// Resampling
// =============================================================================

/// Bilinear resampling to `width x height` (pixel-centre alignment, edge
/// clamping). Vector components are scaled by the size ratio of their axis.
pub fn resample_flow(flow: &FlowField, width: usize, height: usize) -> FlowField {
    if width == flow.width && height == flow.height {
        return flow.clone();
    }
    let sx = flow.width as f64 / width as f64;
    let sy = flow.height as f64 / height as f64;
    let mut out = FlowField::zeros(width, height).with_direction(flow.direction);
    let clamp = |p: f64, n: usize| p.clamp(0.0, (n - 1) as f64);
    for y in 0..height {
        let fy = clamp((y as f64 + 0.5) * sy - 0.5, flow.height);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(flow.height - 1);
        let wy = fy - y0 as f64;
        for x in 0..width {
            let fx = clamp((x as f64 + 0.5) * sx - 0.5, flow.width);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(flow.width - 1);
            let wx = fx - x0 as f64;
            let lerp = |c: &[f32]| {
                let g = |xx: usize, yy: usize| c[yy * flow.width + xx] as f64;
                (1.0 - wy) * ((1.0 - wx) * g(x0, y0) + wx * g(x1, y0)) + wy * ((1.0 - wx) * g(x0, y1) + wx * g(x1, y1))
            };
            let i = y * width + x;
            out.u[i] = (lerp(&flow.u) / sx) as f32;
            out.v[i] = (lerp(&flow.v) / sy) as f32;
        }
    }
    out
}

/// Bilinear upsampling by an integer factor, vectors multiplied by `factor`.
pub fn upscale_flow(flow: &FlowField, factor: usize) -> Result<FlowField> {
    if factor == 0 {
        return Err(Error::InvalidInput("flow upscale factor must be >= 1".into()));
    }
    Ok(resample_flow(flow, flow.width * factor, flow.height * factor))
}

// =============================================================================
// Flow sequences
// =============================================================================

/// Forward flows for frames `0..f-1` and backward flows for frames `1..f`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSequence {
    pub forward: Vec<FlowField>,
    pub backward: Vec<FlowField>,
}

impl FlowSequence {
    /// All-zero flows for a `frames`-long video.
    pub fn zeros(width: usize, height: usize, frames: usize) -> Self {
        let n = frames.saturating_sub(1);
        Self {
            forward: vec![FlowField::zeros(width, height); n],
            backward: vec![FlowField::zeros(width, height).with_direction(FlowDirection::Backward); n],
        }
    }

    /// Flow from frame `t` to `t + 1`.
    pub fn forward_at(&self, t: usize) -> Option<&FlowField> {
        self.forward.get(t)
    }

    /// Flow from frame `t` to `t - 1`.
    pub fn backward_at(&self, t: usize) -> Option<&FlowField> {
        t.checked_sub(1).and_then(|i| self.backward.get(i))
    }

    /// Checks flow dimensions and counts against `v`.
    pub fn check_video(&self, v: &Video) -> Result<()> {
        let needed = v.frames() - 1;
        if self.forward.len() != needed || self.backward.len() != needed {
            return Err(Error::InvalidInput(format!(
                "{} frames need {needed} flows per direction, got {} forward and {} backward",
                v.frames(),
                self.forward.len(),
                self.backward.len()
            )));
        }
        for f in self.forward.iter().chain(&self.backward) {
            if f.width != v.width() || f.height != v.height() {
                return Err(Error::InvalidInput(format!(
                    "flow is {}x{}, video is {}x{}",
                    f.width,
                    f.height,
                    v.width(),
                    v.height()
                )));
            }
        }
        Ok(())
    }

    /// Resamples every field to `width x height`.
    pub fn resampled(&self, width: usize, height: usize) -> Self {
        Self {
            forward: self.forward.iter().map(|f| resample_flow(f, width, height)).collect(),
            backward: self.backward.iter().map(|f| resample_flow(f, width, height)).collect(),
        }
    }

    /// Loads `.flo` files: forward for indices `first..last`, backward for
    /// `first+1..=last`, then rescales them to `width x height`. Fields that
    /// already have that size are used as is; others must be `1/scale` of it.
    pub fn load(
        forward_pattern: &str,
        backward_pattern: &str,
        first: usize,
        last: usize,
        width: usize,
        height: usize,
        scale: usize,
    ) -> Result<Self> {
        let fwd = FramePattern::parse(forward_pattern)?;
        let bwd = FramePattern::parse(backward_pattern)?;
        let fit = |f: FlowField| -> Result<FlowField> {
            if f.width == width && f.height == height {
                return Ok(f);
            }
            let (ew, eh) = (width.div_ceil(scale.max(1)), height.div_ceil(scale.max(1)));
            if scale <= 1 || f.width.abs_diff(ew) > 1 || f.height.abs_diff(eh) > 1 {
                return Err(Error::Format(format!(
                    "flow is {}x{}, expected {width}x{height} or 1/{scale} of it",
                    f.width, f.height
                )));
            }
            Ok(resample_flow(&f, width, height))
        };
        let mut seq = Self {
            forward: Vec::new(),
            backward: Vec::new(),
        };
        for t in first..last {
            seq.forward.push(fit(load_flo(&fwd.path(t))?)?);
        }
        for t in first + 1..=last {
            seq.backward
                .push(fit(load_flo(&bwd.path(t))?)?.with_direction(FlowDirection::Backward));
        }
        Ok(seq)
    }

    pub fn save(&self, forward_pattern: &str, backward_pattern: &str, first: usize) -> Result<()> {
        let fwd = FramePattern::parse(forward_pattern)?;
        let bwd = FramePattern::parse(backward_pattern)?;
        for (i, f) in self.forward.iter().enumerate() {
            write_flo(&fwd.path(first + i), f)?;
        }
        for (i, f) in self.backward.iter().enumerate() {
            write_flo(&bwd.path(first + 1 + i), f)?;
        }
        Ok(())
    }
}

// =============================================================================
// Trajectories
// =============================================================================

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub x: f64,
    pub y: f64,
    pub t: usize,
}

impl TrajectoryPoint {
    /// Window centre on the pixel grid.
    pub fn center(&self) -> PatchCoord {
        PatchCoord::new(self.x.round() as usize, self.y.round() as usize, self.t)
    }
}

/// Integrated path of a patch position through the temporal window.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Frames `t+1, t+2, ...`
    pub forward: Vec<TrajectoryPoint>,
    /// Frames `t-1, t-2, ...`
    pub backward: Vec<TrajectoryPoint>,
}

impl Trajectory {
    pub fn points(&self) -> impl Iterator<Item = &TrajectoryPoint> {
        self.forward.iter().chain(&self.backward)
    }
}

/// Follows `start` through up to `nf` frames each way: the position in the
/// next frame is the current one plus the flow sampled at the rounded
/// current position. Positions are clamped to the valid patch domain and
/// the path stops at the last frame that can hold a patch of `spec`.
pub fn trajectory(flows: &FlowSequence, start: PatchCoord, nf: usize, spec: PatchSpec) -> Result<Trajectory> {
    let (width, height, frames) = match flows.forward.first().or(flows.backward.first()) {
        Some(f) => (f.width, f.height, flows.forward.len().max(flows.backward.len()) + 1),
        None => {
            return Ok(Trajectory {
                forward: Vec::new(),
                backward: Vec::new(),
            })
        }
    };
    if start.t >= frames || spec.k > width || spec.k > height || spec.kt > frames {
        return Err(Error::InvalidInput(format!("trajectory start {start:?} outside the flow domain")));
    }
    let max_x = (width - spec.k) as f64;
    let max_y = (height - spec.k) as f64;
    let last = frames - spec.kt;
    let missing = |t: usize| Error::InvalidInput(format!("missing flow for frame {t}"));
    let origin = ((start.x as f64).min(max_x), (start.y as f64).min(max_y));

    let step = |(x, y): (f64, f64), field: &FlowField| -> (f64, f64) {
        let (u, v) = field.at(x.round() as usize, y.round() as usize);
        ((x + u).clamp(0.0, max_x), (y + v).clamp(0.0, max_y))
    };

    let mut forward = Vec::new();
    let mut pos = origin;
    for h in start.t + 1..=(start.t + nf).min(last) {
        pos = step(pos, flows.forward_at(h - 1).ok_or_else(|| missing(h - 1))?);
        forward.push(TrajectoryPoint { x: pos.0, y: pos.1, t: h });
    }
    let mut backward = Vec::new();
    let mut pos = origin;
    for h in (start.t.saturating_sub(nf)..start.t).rev() {
        pos = step(pos, flows.backward_at(h + 1).ok_or_else(|| missing(h + 1))?);
        backward.push(TrajectoryPoint { x: pos.0, y: pos.1, t: h });
    }
    Ok(Trajectory { forward, backward })
}

/// Patch search with one `npr` window per non-reference frame, centred on
/// the flow trajectory of the reference patch.
pub fn guided_search(
    v: &Video,
    reference: PatchCoord,
    params: &SearchParams,
    spec: PatchSpec,
    flows: &FlowSequence,
) -> Result<MatchList> {
    if !reference.in_bounds(v, spec) {
        return Err(Error::InvalidInput(format!("reference {reference:?} is out of bounds")));
    }
    let ref_positions = search::region_union(v, spec, &[(reference.x, reference.y)], params.ns);
    let mut all = search::best_of(v, &ref_positions, reference.t, reference, spec, params.nb, params.d);
    if params.nf > 0 && v.frames() > 1 {
        let path = trajectory(flows, reference, params.nf, spec)?;
        let ahead = (reference.t + params.nf).min(v.frames() - spec.kt) - reference.t;
        let behind = reference.t - reference.t.saturating_sub(params.nf);
        if path.forward.len() != ahead || path.backward.len() != behind {
            return Err(Error::InvalidInput(format!(
                "flows do not cover frames {}..={} around {reference:?}",
                reference.t - behind,
                reference.t + ahead
            )));
        }
        for p in path.points() {
            let c = p.center();
            let region = search::region_union(v, spec, &[(c.x, c.y)], params.npr);
            all.extend(search::best_of(v, &region, p.t, reference, spec, params.nb, params.d));
        }
    }
    Ok(search::finalize(all, reference, params, spec, v))
}

// =============================================================================
// Block-matching flow
// =============================================================================

/// Integer flow from frame `a` to frame `b` (both `width x height`): each
/// `block x block` tile takes the displacement within `radius` minimizing
/// the SSD between the tile in `a` and the displaced tile in `b`. Ties go to
/// the smaller displacement, then to the smaller `(dy, dx)`. Every pixel
/// inherits the vector of the tile containing it.
pub fn block_matching_flow(a: &[f64], b: &[f64], width: usize, height: usize, block: usize, radius: usize) -> Result<FlowField> {
    if a.len() != width * height || b.len() != width * height {
        return Err(Error::InvalidInput("frames are not congruent".into()));
    }
    if block == 0 {
        return Err(Error::InvalidInput("block size must be >= 1".into()));
    }
    let mut out = FlowField::zeros(width, height);
    let r = radius as isize;
    for by in (0..height).step_by(block) {
        let bh = block.min(height - by);
        for bx in (0..width).step_by(block) {
            let bw = block.min(width - bx);
            let mut best: Option<(f64, isize, isize, isize)> = None;
            for dy in -r..=r {
                let y0 = by as isize + dy;
                if y0 < 0 || y0 as usize + bh > height {
                    continue;
                }
                for dx in -r..=r {
                    let x0 = bx as isize + dx;
                    if x0 < 0 || x0 as usize + bw > width {
                        continue;
                    }
                    let mut ssd = 0.0;
                    for yy in 0..bh {
                        let ra = &a[(by + yy) * width + bx..(by + yy) * width + bx + bw];
                        let start = (y0 as usize + yy) * width + x0 as usize;
                        let rb = &b[start..start + bw];
                        for (p, q) in ra.iter().zip(rb) {
                            ssd += (p - q) * (p - q);
                        }
                    }
                    let key = (ssd, dx * dx + dy * dy, dy, dx);
                    let better = match best {
                        None => true,
                        Some(cur) => {
                            key.0 < cur.0 || (key.0 == cur.0 && (key.1, key.2, key.3) < (cur.1, cur.2, cur.3))
                        }
                    };
                    if better {
                        best = Some(key);
                    }
                }
            }
            let (_, _, dy, dx) = best.expect("zero displacement is always admissible");
            for yy in by..by + bh {
                for xx in bx..bx + bw {
                    out.u[yy * width + xx] = dx as f32;
                    out.v[yy * width + xx] = dy as f32;
                }
            }
        }
    }
    Ok(out)
}

/// Box-filter decimation by `scale` (partial tiles averaged over their size).
fn box_downscale(frame: &[f64], width: usize, height: usize, scale: usize) -> (usize, usize, Vec<f64>) {
    let (w, h) = (width.div_ceil(scale), height.div_ceil(scale));
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            let mut n = 0.0;
            for yy in y * scale..((y + 1) * scale).min(height) {
                for xx in x * scale..((x + 1) * scale).min(width) {
                    sum += frame[yy * width + xx];
                    n += 1.0;
                }
            }
            out[y * w + x] = sum / n;
        }
    }
    (w, h, out)
}

/// Settings of the built-in flow estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockMatchingConfig {
    /// Decimation factor applied before matching.
    pub scale: usize,
    /// Tile side at the decimated resolution.
    pub block: usize,
    /// Search radius at the decimated resolution.
    pub radius: usize,
}

impl Default for BlockMatchingConfig {
    fn default() -> Self {
        Self {
            scale: 4,
            block: 4,
            radius: 4,
        }
    }
}

/// Forward and backward block-matching flows of a whole video at `1/scale`
/// resolution (vectors in decimated pixels).
pub fn estimate_flows_lowres(v: &Video, cfg: BlockMatchingConfig) -> Result<FlowSequence> {
    let scale = cfg.scale.max(1);
    let small: Vec<(usize, usize, Vec<f64>)> = (0..v.frames())
        .map(|t| box_downscale(v.frame(t), v.width(), v.height(), scale))
        .collect();
    let mut seq = FlowSequence {
        forward: Vec::new(),
        backward: Vec::new(),
    };
    for t in 0..v.frames().saturating_sub(1) {
        let (w, h, ref a) = small[t];
        let b = &small[t + 1].2;
        seq.forward.push(block_matching_flow(a, b, w, h, cfg.block, cfg.radius)?);
        seq.backward
            .push(block_matching_flow(b, a, w, h, cfg.block, cfg.radius)?.with_direction(FlowDirection::Backward));
    }
    Ok(seq)
}

/// [`estimate_flows_lowres`] brought back to the video's resolution.
pub fn estimate_flows(v: &Video, cfg: BlockMatchingConfig) -> Result<FlowSequence> {
    Ok(estimate_flows_lowres(v, cfg)?.resampled(v.width(), v.height()))
}
